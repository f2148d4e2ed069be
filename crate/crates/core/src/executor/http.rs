use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{build_request, missing_required, truncate_body, ExecutorError, ToolExecutor};
use crate::model::{ExplorationInstance, HttpMethod, ResponseStatus, ToolDocumentation, ToolResponse};

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Calls live tool endpoints over HTTP/1.1.
pub struct HttpExecutor {
    agent: ureq::Agent,
    base_url: Option<String>,
    bearer: Option<String>,
    truncation_chars: usize,
    slots: Slots,
}

impl HttpExecutor {
    pub fn new(timeout: Duration, truncation_chars: usize, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpExecutor {
            agent,
            base_url: None,
            bearer: None,
            truncation_chars,
            slots: Slots {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    /// Prefix for URL templates that carry no scheme.
    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = Some(base.into());
        self
    }

    pub fn with_bearer(mut self, token: impl Into<String>) -> Self {
        self.bearer = Some(token.into());
        self
    }

    fn absolute(&self, path: &str, tool: &str) -> Result<String, ExecutorError> {
        if path.starts_with("http://") || path.starts_with("https://") {
            return Ok(path.to_string());
        }
        match &self.base_url {
            Some(base) => Ok(format!(
                "{}/{}",
                base.trim_end_matches('/'),
                path.trim_start_matches('/')
            )),
            None => Err(ExecutorError::Request {
                tool: tool.to_string(),
                message: format!("relative URL `{path}` and no base URL configured"),
            }),
        }
    }
}

impl ToolExecutor for HttpExecutor {
    fn execute(&self, instance: &ExplorationInstance, doc: &ToolDocumentation) -> Result<ToolResponse, ExecutorError> {
        if let Some(resp) = missing_required(instance, doc) {
            return Ok(resp);
        }
        let req = build_request(instance, doc);
        let url = self.absolute(&req.path, &doc.name)?;
        let auth = self.bearer.as_ref().map(|t| format!("Bearer {t}"));

        let _slot = self.slots.acquire();
        let started = Instant::now();
        let result = match req.method {
            HttpMethod::Get | HttpMethod::Delete => {
                let mut b = if req.method == HttpMethod::Get {
                    self.agent.get(&url)
                } else {
                    self.agent.delete(&url)
                };
                for (k, v) in &req.query {
                    b = b.query(k, v);
                }
                if let Some(a) = &auth {
                    b = b.header("Authorization", a);
                }
                b.call()
            }
            HttpMethod::Post | HttpMethod::Put | HttpMethod::Patch => {
                let mut b = match req.method {
                    HttpMethod::Post => self.agent.post(&url),
                    HttpMethod::Put => self.agent.put(&url),
                    _ => self.agent.patch(&url),
                };
                if let Some(a) = &auth {
                    b = b.header("Authorization", a);
                }
                b.send_json(req.body.unwrap_or_default())
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let classify = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => ToolResponse {
                latency_ms,
                ..ToolResponse::failure(ResponseStatus::Timeout, "deadline exceeded")
            },
            other => ToolResponse {
                latency_ms,
                ..ToolResponse::failure(ResponseStatus::TransportError, other.to_string())
            },
        };
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Ok(classify(e)),
        };
        let status = resp.status().as_u16();
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return Ok(classify(e)),
        };
        let (body, truncated) = truncate_body(body, self.truncation_chars);
        Ok(ToolResponse::from_http(status, body, truncated, latency_ms))
    }

    fn describe(&self) -> String {
        format!("http(base={})", self.base_url.as_deref().unwrap_or("-"))
    }
}
