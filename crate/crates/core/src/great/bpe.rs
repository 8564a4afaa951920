//! Byte-level byte-pair encoding.
//!
//! Ids `0..256` are raw bytes, then the three specials, then one id per
//! learned merge in rank order. Text is split into words before each
//! space (the space stays with the following word) and merges never cross
//! word boundaries.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const FIRST_MERGE: u32 = 259;
/// Smallest vocabulary: bytes plus specials.
pub const MIN_VOCAB: usize = FIRST_MERGE as usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    /// Merged pairs in rank order; merge `r` produces id `FIRST_MERGE + r`.
    pub merges: Vec<(u32, u32)>,
}

fn words(text: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..text.len() {
        if text[i] == b' ' {
            out.push(&text[start..i]);
            start = i;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn merge_word(word: &mut Vec<u32>, pair: (u32, u32), id: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
            out.push(id);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

/// Learns up to `vocab_size − 259` merges, each time merging the most
/// frequent adjacent pair; ties go to the smallest `(left, right)` id
/// pair. Stops early when no pair is left.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("tokenizer corpus"));
    }
    if vocab_size < MIN_VOCAB {
        return Err(Error::InvalidArgument(format!("vocabulary size {vocab_size} < {MIN_VOCAB}")));
    }
    let mut counts: BTreeMap<&[u8], u64> = BTreeMap::new();
    for s in corpus {
        for w in words(s.as_ref().as_bytes()) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut table: Vec<(Vec<u32>, u64)> = counts.into_iter().map(|(w, c)| (w.iter().map(|&b| b as u32).collect(), c)).collect();
    let mut merges = Vec::new();
    while merges.len() < vocab_size - MIN_VOCAB {
        let mut pairs: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (w, c) in &table {
            for p in w.windows(2) {
                *pairs.entry((p[0], p[1])).or_insert(0) += c;
            }
        }
        // BTreeMap iterates pairs in ascending order, so the first maximum
        // is the smallest pair.
        let Some((&best, _)) = pairs.iter().fold(None, |acc: Option<(&(u32, u32), &u64)>, (p, c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ => Some((p, c)),
        }) else {
            break;
        };
        let id = FIRST_MERGE + merges.len() as u32;
        for (w, _) in &mut table {
            merge_word(w, best, id);
        }
        merges.push(best);
    }
    Ok(Vocab { merges })
}

impl Vocab {
    pub fn len(&self) -> usize {
        MIN_VOCAB + self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn ranks(&self) -> BTreeMap<(u32, u32), u32> {
        self.merges.iter().enumerate().map(|(r, &p)| (p, r as u32)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let ranks = self.ranks();
        let mut out = Vec::new();
        for w in words(bytes) {
            let mut ids: Vec<u32> = w.iter().map(|&b| b as u32).collect();
            loop {
                let best = ids.windows(2).filter_map(|p| ranks.get(&(p[0], p[1])).map(|&r| (r, (p[0], p[1])))).min();
                match best {
                    Some((r, pair)) => merge_word(&mut ids, pair, FIRST_MERGE + r),
                    None => break,
                }
            }
            out.extend(ids);
        }
        out
    }

    /// Byte expansion of one id; specials expand to nothing.
    pub fn token_bytes(&self, id: u32, out: &mut Vec<u8>) -> Result<()> {
        match id {
            0..=255 => out.push(id as u8),
            BOS | EOS | PAD => {}
            _ => {
                let &(a, b) = self.merges.get((id - FIRST_MERGE) as usize).ok_or_else(|| Error::InvalidArgument(format!("token id {id}")))?;
                self.token_bytes(a, out)?;
                self.token_bytes(b, out)?;
            }
        }
        Ok(())
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            self.token_bytes(id, &mut out)?;
        }
        Ok(out)
    }

    /// Decodes to text; invalid UTF-8 sequences become U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_dominant_pair() {
        let v = train_bpe(&["aaaa"], MIN_VOCAB + 1).unwrap();
        assert_eq!(v.merges, [(b'a' as u32, b'a' as u32)]);
        assert_eq!(v.encode("aaaa"), [FIRST_MERGE, FIRST_MERGE]);
        assert_eq!(v.encode("aaa"), [FIRST_MERGE, b'a' as u32]);
    }

    #[test]
    fn hand_simulated_merges() {
        // Words: "ab", " ab", "abc", "bc" (once each).
        // 1. (a,b) occurs 3 times.
        // 2. (' ',ab), (ab,c), (b,c) tie at 1; (32, 259) is smallest.
        // 3. (b,c) = (98, 99) beats (259, 99).
        // 4. only (ab, c) is left.
        let v = train_bpe(&["ab ab", "abc", "bc"], MIN_VOCAB + 10).unwrap();
        let (a, b, c, sp) = (97, 98, 99, 32);
        assert_eq!(v.merges, [(a, b), (sp, 259), (b, c), (259, c)]);
        assert_eq!(v.len(), MIN_VOCAB + 4);
    }

    #[test]
    fn too_small_vocabulary() {
        assert!(train_bpe(&["x"], MIN_VOCAB - 1).is_err());
        assert!(train_bpe::<&str>(&[], 300).is_err());
        assert_eq!(train_bpe(&["x"], MIN_VOCAB).unwrap().merges, vec![]);
    }

    #[test]
    fn round_trip() {
        let v = train_bpe(&["Age is 26 and Gender is M", "Age is 31 and Gender is F"], 300).unwrap();
        for s in ["Age is 26 and Gender is M", "héllo wörld", "", "  double  spaces ", "Age is 999"] {
            let ids = v.encode(s);
            assert_eq!(v.decode(&ids).unwrap(), s);
            assert_eq!(v.encode(&v.decode(&ids).unwrap()), ids);
        }
        assert!(v.encode("Age is 26 and Gender is M").len() < 25);
    }
}
