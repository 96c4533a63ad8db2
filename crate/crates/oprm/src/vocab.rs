//! Token vocabularies for the synthetic associative-recall tasks.

use crate::error::{Error, Result};
use crate::types::TokenId;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Reserved token ids shared by every vocabulary layout.
pub const PAD: TokenId = 0;
/// The "I don't know" / error token.
pub const ERROR: TokenId = 1;
/// Marks the end of the query ("?" in the task).
pub const QUERY_MARKER: TokenId = 2;
/// Single-token stand-in for the "answer Error if absent" instruction.
pub const IDK_INSTRUCTION: TokenId = 3;

const RESERVED: u32 = 4;

/// A symbolic vocabulary: four reserved tokens followed by a key alphabet and
/// a value alphabet (disjoint id intervals).
///
/// Keys and values are fixed-width token strings over their alphabets:
/// width 1/1 in the controlled protocol, 3 letters / 5 digits in the
/// zero-shot protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: usize,
    key_start: u32,
    key_count: u32,
    value_start: u32,
    value_count: u32,
    key_len: usize,
    value_len: usize,
}

impl Vocab {
    /// Controlled-protocol vocabulary: single-token keys and values.
    pub fn controlled(n_keys: usize, n_values: usize) -> Result<Self> {
        if n_keys == 0 || n_values == 0 {
            return Err(Error::usage("key and value alphabets must be nonempty"));
        }
        Ok(Vocab {
            size: RESERVED as usize + n_keys + n_values,
            key_start: RESERVED,
            key_count: n_keys as u32,
            value_start: RESERVED + n_keys as u32,
            value_count: n_values as u32,
            key_len: 1,
            value_len: 1,
        })
    }

    /// Zero-shot-protocol vocabulary: keys are 3-letter strings over a
    /// 26-token alphabet, values are 5-digit strings over a 10-token alphabet.
    pub fn zero_shot() -> Self {
        Vocab {
            size: RESERVED as usize + 26 + 10,
            key_start: RESERVED,
            key_count: 26,
            value_start: RESERVED + 26,
            value_count: 10,
            key_len: 3,
            value_len: 5,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pad_token(&self) -> TokenId {
        PAD
    }

    pub fn error_token(&self) -> TokenId {
        ERROR
    }

    pub fn query_marker(&self) -> TokenId {
        QUERY_MARKER
    }

    pub fn idk_instruction(&self) -> TokenId {
        IDK_INSTRUCTION
    }

    pub fn key_range(&self) -> Range<TokenId> {
        self.key_start..self.key_start + self.key_count
    }

    pub fn value_range(&self) -> Range<TokenId> {
        self.value_start..self.value_start + self.value_count
    }

    /// Tokens per key (1 controlled, 3 zero-shot).
    pub fn key_len(&self) -> usize {
        self.key_len
    }

    /// Tokens per value (1 controlled, 5 zero-shot).
    pub fn value_len(&self) -> usize {
        self.value_len
    }

    /// Tokens per fact (key followed by value).
    pub fn fact_len(&self) -> usize {
        self.key_len + self.value_len
    }

    pub fn contains(&self, t: TokenId) -> bool {
        (t as usize) < self.size
    }

    /// Distinct key strings this vocabulary can express.
    pub fn key_space(&self) -> u64 {
        (self.key_count as u64).pow(self.key_len as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let reserved = [PAD, ERROR, QUERY_MARKER, IDK_INSTRUCTION];
        for (i, a) in reserved.iter().enumerate() {
            for b in &reserved[i + 1..] {
                if a == b {
                    return Err(Error::usage("reserved token ids must be distinct"));
                }
            }
            if *a as usize >= self.size {
                return Err(Error::usage("reserved token id out of range"));
            }
        }
        let k = self.key_range();
        let v = self.value_range();
        if k.end as usize > self.size || v.end as usize > self.size {
            return Err(Error::usage("alphabet interval out of range"));
        }
        if k.start < v.end && v.start < k.end {
            return Err(Error::usage("key and value intervals overlap"));
        }
        if k.start < RESERVED || v.start < RESERVED {
            return Err(Error::usage("alphabet intervals collide with reserved ids"));
        }
        Ok(())
    }

    /// Compact textual form stored in checkpoint metadata.
    pub fn spec_string(&self) -> String {
        if self.key_len == 1 && self.value_len == 1 {
            format!("controlled:{}:{}", self.key_count, self.value_count)
        } else {
            "zero-shot".to_string()
        }
    }

    pub fn from_spec_string(s: &str) -> Result<Self> {
        if s == "zero-shot" {
            return Ok(Vocab::zero_shot());
        }
        if let Some(rest) = s.strip_prefix("controlled:") {
            let mut it = rest.split(':');
            let k = it.next().and_then(|x| x.parse::<usize>().ok());
            let v = it.next().and_then(|x| x.parse::<usize>().ok());
            if let (Some(k), Some(v), None) = (k, v, it.next()) {
                return Vocab::controlled(k, v);
            }
        }
        Err(Error::Checkpoint(format!("unknown vocab spec {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controlled_layout_disjoint_and_in_range() {
        let v = Vocab::controlled(64, 64).unwrap();
        v.validate().unwrap();
        assert_eq!(v.size(), 132);
        assert_eq!(v.key_range(), 4..68);
        assert_eq!(v.value_range(), 68..132);
        assert_eq!(v.fact_len(), 2);
    }

    #[test]
    fn zero_shot_layout() {
        let v = Vocab::zero_shot();
        v.validate().unwrap();
        assert_eq!(v.size(), 40);
        assert_eq!(v.key_len(), 3);
        assert_eq!(v.value_len(), 5);
        assert_eq!(v.fact_len(), 8);
        assert_eq!(v.key_space(), 26u64.pow(3));
    }

    #[test]
    fn spec_string_roundtrip() {
        for v in [Vocab::controlled(10, 7).unwrap(), Vocab::zero_shot()] {
            let s = v.spec_string();
            assert_eq!(Vocab::from_spec_string(&s).unwrap(), v);
        }
        assert!(Vocab::from_spec_string("nope").is_err());
    }
}
