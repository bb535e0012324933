use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const MASK_TOKEN: &str = "<MASK>";
pub const EOS_TOKEN: &str = "<EOS>";

const HEADER: &str = "mdlm-vocab v1";

/// Character-level vocabulary with two special tokens.
///
/// `<EOS>` doubles as padding; there is no separate pad token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    mask_id: TokenId,
    eos_id: TokenId,
}

impl Vocab {
    pub fn new(tokens: Vec<String>, mask_id: TokenId, eos_id: TokenId) -> Result<Self> {
        let size = tokens.len();
        if mask_id == eos_id {
            return Err(Error::config("mask and eos must be distinct tokens"));
        }
        if mask_id as usize >= size || eos_id as usize >= size {
            return Err(Error::config(format!(
                "special token index out of range for vocab of size {size}"
            )));
        }
        let mut index = HashMap::with_capacity(size);
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains('\n') {
                return Err(Error::config(format!("token {i} is empty or multi-line")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::config(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            mask_id,
            eos_id,
        })
    }

    /// The default ~30 symbol vocabulary covering both toy tasks and the
    /// `<answer>...</answer>` markup.
    pub fn toy() -> Self {
        let mut tokens = vec![MASK_TOKEN.to_string(), EOS_TOKEN.to_string()];
        tokens.extend("0123456789+-*/()=,<>answer".chars().map(String::from));
        Self::new(tokens, 0, 1).expect("toy vocab is well-formed")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.size() {
            Ok(())
        } else {
            Err(Error::InvalidToken {
                token: id,
                vocab_size: self.size(),
            })
        }
    }

    /// Character-level encoding. Special tokens never appear in text.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut buf = [0u8; 4];
        text.chars()
            .map(|c| {
                let s: &str = c.encode_utf8(&mut buf);
                self.id(s)
                    .filter(|&id| id != self.mask_id && id != self.eos_id)
                    .ok_or_else(|| Error::format("text", format!("character {c:?} not in vocab")))
            })
            .collect()
    }

    /// Concatenates token strings, stopping before the first `<EOS>`.
    pub fn decode_until_eos(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            if id == self.eos_id {
                break;
            }
            self.check(id)?;
            out.push_str(&self.tokens[id as usize]);
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "mask={}", self.mask_id).unwrap();
        writeln!(out, "eos={}", self.eos_id).unwrap();
        for t in &self.tokens {
            writeln!(out, "{t}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(HEADER) => {}
            other => return Err(Error::format("vocab", format!("bad header {other:?}"))),
        }
        let mut mask = None;
        let mut eos = None;
        let mut tokens = Vec::new();
        for line in lines {
            if tokens.is_empty() {
                if let Some(v) = line.strip_prefix("mask=") {
                    mask = Some(parse_index(v)?);
                    continue;
                }
                if let Some(v) = line.strip_prefix("eos=") {
                    eos = Some(parse_index(v)?);
                    continue;
                }
            }
            tokens.push(line.to_string());
        }
        let mask = mask.ok_or_else(|| Error::format("vocab", "missing mask= line"))?;
        let eos = eos.ok_or_else(|| Error::format("vocab", "missing eos= line"))?;
        Self::new(tokens, mask, eos)
    }

    /// Hex SHA-256 of the serialized vocabulary; stored in checkpoints.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

fn parse_index(v: &str) -> Result<TokenId> {
    v.trim()
        .parse()
        .map_err(|_| Error::format("vocab", format!("bad index {v:?}")))
}
