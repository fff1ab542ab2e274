//! Jupyter messaging wire format (protocol v5): multipart frames
//! `[identities..., "<IDS|MSG>", signature, header, parent_header, metadata, content]`.

use hmac::{Hmac, KeyInit, Mac};
use serde_json::{json, Value};
use sha2::Sha256;

pub const DELIMITER: &[u8] = b"<IDS|MSG>";
pub const PROTOCOL_VERSION: &str = "5.3";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("signing key is empty")]
    EmptyKey,
    #[error("no <IDS|MSG> delimiter")]
    MissingDelimiter,
    #[error("expected 5 frames after the delimiter, found {0}")]
    MissingFrames(usize),
    #[error("signature mismatch")]
    BadSignature,
    #[error("invalid JSON frame: {0}")]
    InvalidJson(String),
}

fn mac(key: &[u8], frames: [&[u8]; 4]) -> Hmac<Sha256> {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts keys of any length");
    for f in frames {
        mac.update(f);
    }
    mac
}

/// HMAC-SHA256 of the concatenated header, parent header, metadata and
/// content frames, as lowercase hex.
pub fn sign_message(key: &[u8], frames: [&[u8]; 4]) -> Result<String, WireError> {
    if key.is_empty() {
        return Err(WireError::EmptyKey);
    }
    Ok(hex::encode(mac(key, frames).finalize().into_bytes()))
}

/// Constant-time check of a hex signature.
pub fn verify_signature(key: &[u8], frames: [&[u8]; 4], signature: &str) -> bool {
    if key.is_empty() {
        return false;
    }
    let Ok(tag) = hex::decode(signature) else {
        return false;
    };
    mac(key, frames).verify_slice(&tag).is_ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub identities: Vec<Vec<u8>>,
    pub header: Value,
    pub parent_header: Value,
    pub metadata: Value,
    pub content: Value,
}

impl WireMessage {
    pub fn msg_type(&self) -> &str {
        self.header["msg_type"].as_str().unwrap_or("")
    }

    pub fn msg_id(&self) -> &str {
        self.header["msg_id"].as_str().unwrap_or("")
    }

    pub fn parent_msg_id(&self) -> Option<&str> {
        self.parent_header.get("msg_id").and_then(Value::as_str)
    }

    /// Frames ready to send. With an empty key the signature frame is empty
    /// (unauthenticated sessions).
    pub fn encode(&self, key: &[u8]) -> Vec<Vec<u8>> {
        let parts = [&self.header, &self.parent_header, &self.metadata, &self.content]
            .map(|v| serde_json::to_vec(v).expect("JSON values serialize"));
        let signature = if key.is_empty() {
            String::new()
        } else {
            sign_message(key, [&parts[0], &parts[1], &parts[2], &parts[3]]).expect("key is non-empty")
        };
        let mut frames = self.identities.clone();
        frames.push(DELIMITER.to_vec());
        frames.push(signature.into_bytes());
        frames.extend(parts);
        frames
    }

    /// Parses frames, verifying the signature over the raw JSON frames when a
    /// key is set. Frames after the content (buffers) are ignored.
    pub fn decode(frames: &[Vec<u8>], key: &[u8]) -> Result<Self, WireError> {
        let pos = frames
            .iter()
            .position(|f| f == DELIMITER)
            .ok_or(WireError::MissingDelimiter)?;
        let rest = &frames[pos + 1..];
        if rest.len() < 5 {
            return Err(WireError::MissingFrames(rest.len()));
        }
        if !key.is_empty() {
            let signature = std::str::from_utf8(&rest[0]).map_err(|_| WireError::BadSignature)?;
            if !verify_signature(key, [&rest[1], &rest[2], &rest[3], &rest[4]], signature) {
                return Err(WireError::BadSignature);
            }
        }
        let parse = |b: &[u8]| serde_json::from_slice::<Value>(b).map_err(|e| WireError::InvalidJson(e.to_string()));
        Ok(WireMessage {
            identities: frames[..pos].to_vec(),
            header: parse(&rest[1])?,
            parent_header: parse(&rest[2])?,
            metadata: parse(&rest[3])?,
            content: parse(&rest[4])?,
        })
    }
}

/// Builds headers for one session: unique msg_ids, fixed session id.
#[derive(Debug, Clone)]
pub struct MessageFactory {
    session: String,
    username: String,
}

impl Default for MessageFactory {
    fn default() -> Self {
        Self::new("repro-lens")
    }
}

impl MessageFactory {
    pub fn new(username: impl Into<String>) -> Self {
        MessageFactory {
            session: uuid::Uuid::new_v4().to_string(),
            username: username.into(),
        }
    }

    pub fn session(&self) -> &str {
        &self.session
    }

    /// A new message; replies copy the routing identities and header of
    /// `parent`.
    pub fn message(&self, msg_type: &str, content: Value, parent: Option<&WireMessage>) -> WireMessage {
        let header = json!({
            "msg_id": uuid::Uuid::new_v4().to_string(),
            "msg_type": msg_type,
            "session": self.session,
            "username": self.username,
            "date": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            "version": PROTOCOL_VERSION,
        });
        WireMessage {
            identities: parent.map(|p| p.identities.clone()).unwrap_or_default(),
            header,
            parent_header: parent.map(|p| p.header.clone()).unwrap_or_else(|| json!({})),
            metadata: json!({}),
            content,
        }
    }
}
