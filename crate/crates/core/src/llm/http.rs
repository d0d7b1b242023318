use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, Secret, TransportError};

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    url: String,
    key: Secret,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, key: Secret, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpBackend {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            key,
            client,
        })
    }

    pub fn body(req: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({"role": "system", "content": req.system}));
        }
        messages.push(json!({"role": "user", "content": req.user}));
        let mut body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        });
        if req.response_schema.is_some() {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

fn classify(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else if e.is_connect() {
        TransportError::Connect(e.to_string())
    } else {
        TransportError::Protocol(e.to_string())
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(self.key.expose())
            .json(&Self::body(req))
            .send()
            .map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            return Err(TransportError::Status {
                code: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| TransportError::Protocol(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                TransportError::Protocol("response has no choices[0].message.content".into())
            })
    }
}
