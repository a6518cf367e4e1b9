//! Chat-completions style HTTP backend.
//!
//! The whole prompt goes out as one user message whose content interleaves
//! text parts and image parts in placeholder order.

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Capabilities, CompletionRequest, ModelClient, ModelError};
use crate::prompt::{PromptParts, IMAGE_PLACEHOLDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImageMode {
    /// Send image references as URLs.
    #[default]
    Url,
    /// Inline local image files as base-64 data URLs.
    Base64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key; no auth header when unset.
    pub auth_env: Option<String>,
    pub auth_header: String,
    pub auth_prefix: String,
    pub max_images: usize,
    pub image_mode: ImageMode,
    /// Directory that relative image references are resolved against.
    pub image_root: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub requests_per_second: f64,
    pub burst: u32,
    pub max_in_flight: usize,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            auth_env: None,
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            max_images: 4,
            image_mode: ImageMode::Url,
            image_root: None,
            timeout_ms: 60_000,
            max_retries: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            requests_per_second: 2.0,
            burst: 4,
            max_in_flight: 4,
            temperature: Some(0.0),
            max_tokens: Some(64),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Serialize)]
struct ChatMessage {
    role: &'static str,
    content: Vec<ContentPart>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Serialize)]
struct ImageUrl {
    url: String,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<serde_json::Value>,
    #[serde(default)]
    refusal: Option<String>,
}

/// Blocking token bucket.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_second: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self {
            rate: rate_per_second,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes one token, sleeping until one is available. A non-positive rate
    /// disables limiting.
    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.rate;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    count: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn enter(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight lock");
        while self.limit > 0 && *n >= self.limit {
            n = self.cv.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteClient {
    id: String,
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    bucket: TokenBucket,
    in_flight: InFlight,
}

impl RemoteClient {
    pub fn new(id: &str, config: RemoteConfig) -> Result<Self, ModelError> {
        if config.endpoint.is_empty() {
            return Err(ModelError::Config(format!("backend '{id}' has no endpoint")));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ModelError::Config(e.to_string()))?;
        Ok(Self {
            id: id.to_string(),
            bucket: TokenBucket::new(config.requests_per_second, config.burst),
            in_flight: InFlight {
                limit: config.max_in_flight,
                count: Mutex::new(0),
                cv: Condvar::new(),
            },
            config,
            http,
        })
    }

    fn image_url(&self, image: &str) -> Result<String, ModelError> {
        if self.config.image_mode == ImageMode::Url
            || image.starts_with("http://")
            || image.starts_with("https://")
            || image.starts_with("data:")
        {
            return Ok(image.to_string());
        }
        let path = match &self.config.image_root {
            Some(root) => root.join(image),
            None => PathBuf::from(image),
        };
        let bytes = std::fs::read(&path)
            .map_err(|e| ModelError::Config(format!("cannot read image {}: {e}", path.display())))?;
        let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("gif") => "image/gif",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        Ok(format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }

    /// Request body for `parts`; stable byte-for-byte for a fixed input.
    pub fn request_body(&self, parts: &PromptParts) -> Result<String, ModelError> {
        let text = parts.text();
        let mut content = Vec::new();
        let mut images = parts.images.iter();
        for (i, chunk) in text.split(IMAGE_PLACEHOLDER).enumerate() {
            if i > 0 {
                let image = images
                    .next()
                    .ok_or_else(|| ModelError::Config("placeholder without image".into()))?;
                content.push(ContentPart::ImageUrl {
                    image_url: ImageUrl { url: self.image_url(image)? },
                });
            }
            if !chunk.is_empty() {
                content.push(ContentPart::Text { text: chunk.to_string() });
            }
        }
        let body = ChatBody {
            model: &self.config.model,
            messages: vec![ChatMessage { role: "user", content }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        serde_json::to_string(&body).map_err(|e| ModelError::Config(e.to_string()))
    }

    fn send_once(&self, body: &str, deadline: Duration) -> Result<String, ModelError> {
        let mut req = self
            .http
            .post(&self.config.endpoint)
            .timeout(deadline)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(var) = &self.config.auth_env {
            let key = std::env::var(var)
                .map_err(|_| ModelError::Config(format!("environment variable {var} is not set")))?;
            req = req.header(
                self.config.auth_header.as_str(),
                format!("{}{key}", self.config.auth_prefix),
            );
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ModelError::Timeout(deadline)
            } else {
                ModelError::Transport {
                    message: e.to_string(),
                    retryable: true,
                }
            }
        })?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let text = resp.text().map_err(|e| ModelError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if status.as_u16() == 429 {
            return Err(ModelError::RateLimited { retry_after });
        }
        if status.is_server_error() {
            return Err(ModelError::Transport {
                message: format!("HTTP {status}: {text}"),
                retryable: true,
            });
        }
        if !status.is_success() {
            return Err(ModelError::Refused {
                status: status.as_u16(),
                message: text,
            });
        }
        parse_response(&text)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

fn parse_response(text: &str) -> Result<String, ModelError> {
    let resp: ChatResponse =
        serde_json::from_str(text).map_err(|e| ModelError::BadResponse(e.to_string()))?;
    let msg = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ModelError::BadResponse("no choices".into()))?
        .message;
    match msg.content {
        Some(serde_json::Value::String(s)) => Ok(s),
        Some(serde_json::Value::Array(parts)) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
            .collect::<Vec<_>>()
            .join("")),
        _ => match msg.refusal {
            Some(r) => Err(ModelError::Refused { status: 200, message: r }),
            None => Err(ModelError::BadResponse("message has no content".into())),
        },
    }
}

impl ModelClient for RemoteClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_images: self.config.max_images,
            supports_system_text: true,
        }
    }

    fn complete(&self, request: &CompletionRequest, deadline: Duration) -> Result<String, ModelError> {
        let images = request.parts.images.len();
        if images > self.config.max_images {
            return Err(ModelError::TooManyImages {
                images,
                max: self.config.max_images,
            });
        }
        let body = self.request_body(&request.parts)?;
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            let remaining = deadline.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                return Err(ModelError::Timeout(deadline));
            }
            self.bucket.acquire();
            let result = {
                let _gate = self.in_flight.enter();
                self.send_once(&body, remaining)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let wait = e.retry_after().unwrap_or_else(|| self.backoff(attempt));
                    if started.elapsed() + wait >= deadline {
                        return Err(e);
                    }
                    log::debug!("{}: attempt {} failed ({e}); retrying in {wait:?}", self.id, attempt + 1);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
