//! Blocking chat-completion client (`POST {base}/chat/completions`, OpenAI-style schema).

use std::env;
use std::io;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{prompts, BackendError, Completion, PromptInputs, PromptRecord};
use crate::config::SimulationConfig;

pub const ENV_ENDPOINT: &str = "TOPICSIM_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "TOPICSIM_LLM_API_KEY";
pub const ENV_MODEL: &str = "TOPICSIM_LLM_MODEL";

#[derive(Debug, Clone)]
pub struct ChatClient {
    url: String,
    api_key: Option<String>,
    model: String,
    temperature: f64,
    max_retries: u32,
    timeout: Duration,
    backoff_base: Duration,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl ChatClient {
    pub fn new(endpoint: &str, model: &str) -> Self {
        let trimmed = endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        ChatClient {
            url,
            api_key: None,
            model: model.to_string(),
            temperature: 0.5,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(250),
        }
    }

    /// Endpoint and key from `TOPICSIM_LLM_ENDPOINT` / `TOPICSIM_LLM_API_KEY`; the model from
    /// the config, else `TOPICSIM_LLM_MODEL`. Temperature, retries and timeout from the config.
    pub fn from_env(config: &SimulationConfig) -> Result<Self, BackendError> {
        let endpoint = env::var(ENV_ENDPOINT)
            .map_err(|_| BackendError::Unavailable(format!("{ENV_ENDPOINT} is not set")))?;
        let model = if config.llm.model.is_empty() {
            env::var(ENV_MODEL).unwrap_or_default()
        } else {
            config.llm.model.clone()
        };
        let mut client = ChatClient::new(&endpoint, &model)
            .temperature(config.gen_temperature)
            .max_retries(config.llm.max_retries)
            .timeout(Duration::from_secs_f64(config.llm.timeout_secs))
            .backoff_base(Duration::from_millis(config.llm.backoff_base_ms));
        client.api_key = env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(client)
    }

    pub fn api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn timeout(mut self, t: Duration) -> Self {
        self.timeout = t;
        self
    }

    pub fn backoff_base(mut self, d: Duration) -> Self {
        self.backoff_base = d;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Sends one chat request, retrying transport failures, 429 and 5xx with exponential
    /// backoff. Timeouts and other 4xx statuses fail immediately.
    pub fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut attempt = 0u32;
        loop {
            match self.try_once(&agent, &body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempt >= self.max_retries {
                        return Err(BackendError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let delay = self.backoff_base.saturating_mul(1u32 << attempt.min(16));
                    log::warn!("chat request failed ({message}); retry {} in {delay:?}", attempt + 1);
                    thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, agent: &ureq::Agent, body: &Value) -> Result<String, Attempt> {
        let mut req = agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| self.classify(e))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| self.classify(e))?;
        match status {
            200..=299 => extract_content(&text).map_err(|m| {
                Attempt::Fatal(BackendError::Transport {
                    attempts: 1,
                    message: m,
                })
            }),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(BackendError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            })),
        }
    }

    fn classify(&self, e: ureq::Error) -> Attempt {
        match e {
            ureq::Error::Timeout(_) => Attempt::Fatal(BackendError::Timeout { after: self.timeout }),
            ureq::Error::Io(ref io) if io.kind() == io::ErrorKind::TimedOut => {
                Attempt::Fatal(BackendError::Timeout { after: self.timeout })
            }
            other => Attempt::Retry(other.to_string()),
        }
    }
}

fn extract_content(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())
}

impl Completion for ChatClient {
    fn complete(&self, prompt: &PromptRecord, _inputs: &PromptInputs) -> Result<String, BackendError> {
        self.chat(prompts::SYSTEM, &prompt.rendered_text)
    }
}
