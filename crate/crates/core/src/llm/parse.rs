//! Answer extraction. Replies arrive under a six-token completion budget, so
//! the parser accepts truncated and loosely quoted variants of the requested
//! `{'value': X; 'reason': ...}` shape — but never a name outside the pool.

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::types::{Name, NamePool};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no value field in response {0:?}")]
    MissingValue(String),
    #[error("answered name {answered:?} is not in the pool")]
    OutOfPool { answered: String },
}

/// Matches `value` (any quoting) followed by a separator and the answered
/// token, tolerating a leading quote/angle bracket on the token itself.
static VALUE_FIELD: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r#"(?i)['"]?value['"]?\s*[:=]\s*[<'"`]*([A-Za-z0-9_-]+)"#).expect("static regex")
});

/// Extracts the answered name from a raw completion. The reply may be cut off
/// mid-structure (`{'value': Q`), use any quoting, or omit the braces; the
/// extracted token must match a pool name exactly.
pub fn parse_response(raw: &str, pool: &NamePool) -> Result<Name, ParseError> {
    let captures = VALUE_FIELD
        .captures(raw)
        .ok_or_else(|| ParseError::MissingValue(raw.to_owned()))?;
    let token = &captures[1];
    pool.names()
        .iter()
        .find(|n| n.as_str() == token)
        .cloned()
        .ok_or_else(|| ParseError::OutOfPool {
            answered: token.to_owned(),
        })
}

/// The canonical well-formed answer for `name`; used by offline transports
/// and round-trip tests.
pub fn render_answer(name: &Name, reason: &str) -> String {
    format!("{{'value': {name}; 'reason': {reason}}}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> NamePool {
        NamePool::parse(&["Q", "M"]).unwrap()
    }

    #[test]
    fn parses_well_formed_answers() {
        let p = pool();
        for raw in [
            "{'value': Q; 'reason': matching history}",
            "{'value': 'Q'; 'reason': x}",
            "{\"value\": \"Q\"; \"reason\": y}",
            "value: Q",
            "{'value' : Q",
            "{'value': <Q>; 'reason': format echo}",
            "{'Value': Q; 'reason': capitalized key}",
        ] {
            assert_eq!(parse_response(raw, &p).unwrap().as_str(), "Q", "raw={raw:?}");
        }
    }

    #[test]
    fn parses_truncated_answers() {
        // max-token cutoffs leave the structure unterminated.
        let p = pool();
        for raw in ["{'value': M", "{'value': M;", "{'value':M; 'reas"] {
            assert_eq!(parse_response(raw, &p).unwrap().as_str(), "M", "raw={raw:?}");
        }
    }

    #[test]
    fn rejects_out_of_pool_names() {
        let err = parse_response("{'value': Z; 'reason': invention}", &pool()).unwrap_err();
        assert_eq!(err, ParseError::OutOfPool { answered: "Z".into() });
    }

    #[test]
    fn rejects_replies_without_a_value_field() {
        for raw in ["I pick Q", "", "{'reason': Q}"] {
            assert!(matches!(
                parse_response(raw, &pool()),
                Err(ParseError::MissingValue(_))
            ));
        }
    }

    #[test]
    fn multi_character_names_round_trip() {
        let p = NamePool::parse(&["Alice", "Bob"]).unwrap();
        let raw = render_answer(&Name::new("Alice").unwrap(), "precedent");
        assert_eq!(parse_response(&raw, &p).unwrap().as_str(), "Alice");
    }
}
