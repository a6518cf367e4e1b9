#include <stdio.h>
#include <string.h>
#include "assocbench.h"

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    AbCorpus *corpus = NULL;
    if (ab_corpus_load(argv[1], &corpus) != AB_STATUS_OK) {
        fprintf(stderr, "load: %s\n", ab_last_error());
        return 1;
    }
    AbRound *round = NULL;
    AbStatus st = ab_run_oracle_chain(corpus, "metal", "StructM", 500, 7, 1.0, &round);
    if (st != AB_STATUS_OK) {
        fprintf(stderr, "run: %s\n", ab_last_error());
        return 1;
    }
    char *json = NULL;
    if (ab_round_to_json(round, &json) != AB_STATUS_OK) return 1;
    printf("%zu %zu %d\n", ab_corpus_len(corpus), ab_round_final_step_count(round),
           strstr(json, "\"cap_reached\"") != NULL);
    ab_string_free(json);
    ab_round_free(round);
    st = ab_run_oracle_chain(corpus, "no-such-concept", "NoM", 10, 1, 1.0, &round);
    printf("%d\n", (int)st);
    ab_corpus_free(corpus);
    return 0;
}
