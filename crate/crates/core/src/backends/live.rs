use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use crate::domain::{BackendBinding, ImageRef, Modality};

use super::{Backend, BackendError, BackendRequest, BackendResponse, ResponseSource, Usage};

const OPENAI_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
const GEMINI_ENDPOINT: &str = "https://generativelanguage.googleapis.com/v1beta";

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
        .http_status_as_error(false)
        .build()
        .into()
}

fn read_image(image: &ImageRef) -> Result<String, BackendError> {
    let bytes = std::fs::read(&image.path)
        .map_err(|e| BackendError::Permanent(format!("cannot read image {}: {e}", image.path.display())))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn classify_status(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(500).collect::<String>());
    if status == 429 || status == 408 || status >= 500 {
        BackendError::Transient(msg)
    } else {
        BackendError::Permanent(msg)
    }
}

fn classify_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::StatusCode(code) => classify_status(code, ""),
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            BackendError::Transient(e.to_string())
        }
        other => BackendError::Permanent(other.to_string()),
    }
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    headers: &[(&str, String)],
    body: &Value,
) -> Result<(Value, u64), BackendError> {
    let start = Instant::now();
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.header(*k, v.as_str());
    }
    let mut resp = req.send_json(body).map_err(classify_transport)?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(classify_transport)?;
    let latency = start.elapsed().as_millis() as u64;
    if !(200..300).contains(&status) {
        return Err(classify_status(status, &text));
    }
    let value = serde_json::from_str(&text)
        .map_err(|e| BackendError::Permanent(format!("malformed response body: {e}")))?;
    Ok((value, latency))
}

fn non_empty(text: String) -> Result<String, BackendError> {
    if text.trim().is_empty() {
        Err(BackendError::Permanent("empty completion".into()))
    } else {
        Ok(text)
    }
}

/// OpenAI-compatible chat completions endpoint.
pub struct OpenAiBackend {
    name: String,
    modality: Modality,
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(binding: &BackendBinding, api_key: String) -> Self {
        OpenAiBackend {
            name: format!("openai:{}", binding.model_id),
            modality: binding.modality,
            endpoint: binding.endpoint.clone().unwrap_or_else(|| OPENAI_ENDPOINT.to_string()),
            api_key,
            agent: agent(binding.timeout_secs),
        }
    }

    pub fn request_body(request: &BackendRequest, image_b64: Option<&str>) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.text})];
        if let (Some(img), Some(data)) = (&request.image, image_b64) {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{data}", img.media_type)}
            }));
        }
        let mut body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
        });
        if let Some(seed) = request.sampling.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    pub fn parse_response(v: &Value) -> Result<(String, Option<Usage>), BackendError> {
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))?;
        let usage = v.get("usage").map(|u| Usage {
            prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        Ok((non_empty(text.to_string())?, usage))
    }
}

impl Backend for OpenAiBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn modality(&self) -> Modality {
        self.modality
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.check_modality(request)?;
        let image = request.image.as_ref().map(read_image).transpose()?;
        let body = Self::request_body(request, image.as_deref());
        let headers = [("Authorization", format!("Bearer {}", self.api_key))];
        let (v, latency_ms) = post_json(&self.agent, &self.endpoint, &headers, &body)?;
        let (text, usage) = Self::parse_response(&v)?;
        Ok(BackendResponse { text, usage, latency_ms, source: ResponseSource::Live })
    }
}

/// Gemini `generateContent` endpoint.
pub struct GeminiBackend {
    name: String,
    modality: Modality,
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl GeminiBackend {
    pub fn new(binding: &BackendBinding, api_key: String) -> Self {
        GeminiBackend {
            name: format!("gemini:{}", binding.model_id),
            modality: binding.modality,
            endpoint: binding.endpoint.clone().unwrap_or_else(|| GEMINI_ENDPOINT.to_string()),
            api_key,
            agent: agent(binding.timeout_secs),
        }
    }

    pub fn request_body(request: &BackendRequest, image_b64: Option<&str>) -> Value {
        let mut parts = vec![json!({"text": request.text})];
        if let (Some(img), Some(data)) = (&request.image, image_b64) {
            parts.push(json!({"inline_data": {"mime_type": img.media_type, "data": data}}));
        }
        let mut config = json!({
            "temperature": request.sampling.temperature,
            "maxOutputTokens": request.sampling.max_tokens,
        });
        if let Some(seed) = request.sampling.seed {
            config["seed"] = json!(seed);
        }
        json!({"contents": [{"role": "user", "parts": parts}], "generationConfig": config})
    }

    pub fn parse_response(v: &Value) -> Result<(String, Option<Usage>), BackendError> {
        let parts = v["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| BackendError::Permanent("response has no candidates[0].content.parts".into()))?;
        let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
        let usage = v.get("usageMetadata").map(|u| Usage {
            prompt_tokens: u["promptTokenCount"].as_u64().unwrap_or(0),
            completion_tokens: u["candidatesTokenCount"].as_u64().unwrap_or(0),
        });
        Ok((non_empty(text)?, usage))
    }
}

impl Backend for GeminiBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn modality(&self) -> Modality {
        self.modality
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.check_modality(request)?;
        let image = request.image.as_ref().map(read_image).transpose()?;
        let body = Self::request_body(request, image.as_deref());
        let url = format!("{}/models/{}:generateContent", self.endpoint.trim_end_matches('/'), request.model_id);
        let headers = [("x-goog-api-key", self.api_key.clone())];
        let (v, latency_ms) = post_json(&self.agent, &url, &headers, &body)?;
        let (text, usage) = Self::parse_response(&v)?;
        Ok(BackendResponse { text, usage, latency_ms, source: ResponseSource::Live })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Sampling;
    use crate::prompting::RenderedPrompt;

    fn req_with_image() -> BackendRequest {
        let mut r = BackendRequest::new("gpt-x", RenderedPrompt::text_only("Question: q"), Sampling { seed: Some(7), ..Sampling::default() });
        r.image = Some(ImageRef { path: "img.png".into(), sha256: "00".repeat(32), media_type: "image/png".into() });
        r
    }

    #[test]
    fn openai_body_shape() {
        let b = OpenAiBackend::request_body(&req_with_image(), Some("QUJD"));
        assert_eq!(b["model"], "gpt-x");
        assert_eq!(b["messages"][0]["content"][0]["text"], "Question: q");
        assert_eq!(b["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,QUJD");
        assert_eq!(b["seed"], 7);
        assert_eq!(b["temperature"], 0.0);
    }

    #[test]
    fn gemini_body_shape() {
        let b = GeminiBackend::request_body(&req_with_image(), Some("QUJD"));
        assert_eq!(b["contents"][0]["parts"][1]["inline_data"]["data"], "QUJD");
        assert_eq!(b["generationConfig"]["maxOutputTokens"], 1024);
    }

    #[test]
    fn response_parsing() {
        let v = json!({"choices": [{"message": {"content": "Answer: (B)"}}], "usage": {"prompt_tokens": 10, "completion_tokens": 3}});
        let (t, u) = OpenAiBackend::parse_response(&v).unwrap();
        assert_eq!(t, "Answer: (B)");
        assert_eq!(u.unwrap().completion_tokens, 3);
        let g = json!({"candidates": [{"content": {"parts": [{"text": "a"}, {"text": "b"}]}}]});
        assert_eq!(GeminiBackend::parse_response(&g).unwrap().0, "ab");
        assert!(GeminiBackend::parse_response(&json!({"candidates": []})).is_err());
        let empty = json!({"choices": [{"message": {"content": "  "}}]});
        assert!(matches!(OpenAiBackend::parse_response(&empty), Err(BackendError::Permanent(_))));
    }

    #[test]
    fn status_classification() {
        assert!(classify_status(429, "").is_transient());
        assert!(classify_status(503, "").is_transient());
        assert!(!classify_status(400, "").is_transient());
        assert!(!classify_status(401, "").is_transient());
    }
}
