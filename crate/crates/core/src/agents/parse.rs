use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct ReplyParseError {
    pub message: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    String,
    Object,
}

/// Extracts the first balanced JSON object from a model reply and checks
/// that every required key is present with the expected value type.
///
/// Code fences are stripped first; when the reply has a fenced block, that
/// block is searched before the rest of the text.
pub fn parse_agent_reply(raw: &str, required: &[(&str, KeyKind)]) -> Result<Map<String, Value>, ReplyParseError> {
    let fail = |message: String| ReplyParseError {
        message,
        raw: raw.to_string(),
    };
    let object = fenced_block(raw)
        .and_then(first_object)
        .or_else(|| first_object(raw))
        .ok_or_else(|| fail("reply contains no JSON object".into()))?;
    for (key, kind) in required {
        match (object.get(*key), kind) {
            (None, _) => return Err(fail(format!("reply is missing key \"{key}\""))),
            (Some(Value::String(_)), KeyKind::String) | (Some(Value::Object(_)), KeyKind::Object) => {}
            (Some(_), KeyKind::String) => return Err(fail(format!("key \"{key}\" must be a string"))),
            (Some(_), KeyKind::Object) => return Err(fail(format!("key \"{key}\" must be an object"))),
        }
    }
    Ok(object)
}

fn fenced_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    // Skip the info string (e.g. `json`) up to the end of the fence line.
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

/// First `{...}` span, balanced outside of string literals, that parses as a
/// JSON object.
fn first_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find('{') {
        let start = search_from + rel;
        if let Some(end) = balanced_end(&bytes[start..]) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&text[start..start + end]) {
                return Some(map);
            }
        }
        search_from = start + 1;
    }
    None
}

fn balanced_end(bytes: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
