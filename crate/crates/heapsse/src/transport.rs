//! How the client reaches the server: over HTTP, or by calling the
//! dispatcher directly in the same process. Both carry the same bytes.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::server::CloudServer;
use crate::wire::Reply;

#[derive(Debug, thiserror::Error)]
#[error("network error: {0}")]
pub struct NetworkError(pub String);

pub trait Transport: Send + Sync {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError> {
        (**self).request(method, path, body)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError> {
        (**self).request(method, path, body)
    }
}

pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for HttpTransport {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError> {
        let url = format!("{}{}", self.base, path);
        let net = |e: ureq::Error| NetworkError(format!("{url}: {e}"));
        let mut resp = match method {
            "GET" => self.agent.get(&url).call().map_err(net)?,
            "POST" => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(body)
                .map_err(net)?,
            other => return Err(NetworkError(format!("unsupported method {other}"))),
        };
        let status = resp.status().as_u16();
        let json = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.starts_with("application/json"));
        let body = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(net)?;
        Ok(Reply {
            status,
            content_type: if json { "application/json" } else { "application/octet-stream" },
            body,
        })
    }
}

/// Calls the dispatcher directly.
pub struct InProcessTransport(pub Arc<CloudServer>);

impl Transport for InProcessTransport {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError> {
        Ok(self.0.handle(method, path, body))
    }
}

/// One request/response exchange as seen on the wire.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub method: String,
    pub path: String,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

/// Wraps a transport and keeps every exchange for inspection.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<Exchange>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn request(&self, method: &str, path: &str, body: &[u8]) -> Result<Reply, NetworkError> {
        let reply = self.inner.request(method, path, body)?;
        self.log.lock().unwrap().push(Exchange {
            method: method.to_string(),
            path: path.to_string(),
            request: body.to_vec(),
            response: reply.body.clone(),
        });
        Ok(reply)
    }
}
