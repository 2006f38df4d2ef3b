//! Table-driven subword tokenizer.
//!
//! Text is segmented by greedy longest match against the piece table. Spaces
//! are encoded as the word-boundary marker `▁` and a single marker is
//! prepended to the input, so `"1971"` and `"(1971)"` can land on different
//! pieces (`▁1971` versus `▁(19`, `71`, `)`). Characters no piece covers fall
//! back to byte tokens `<0xNN>`, which makes `encode` total.
//!
//! Special tokens (terminator and sentinels) are matched atomically before
//! segmentation, so a rendered prompt containing `<extra_id_0>` encodes to
//! the sentinel id rather than to its characters.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::Fnv1a;

pub type TokenId = u32;

/// The word-boundary marker used in piece surfaces.
pub const BOUNDARY: char = '▁';

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PieceKind {
    Normal,
    Special,
    Byte(u8),
}

/// On-disk vocabulary format. Piece index is the token id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VocabFile {
    pub pieces: Vec<String>,
    pub terminator: String,
    #[serde(default)]
    pub sentinels: Vec<String>,
    /// When false the vocabulary is closed: no byte tokens are added and
    /// characters no piece covers are dropped by `encode`.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub byte_fallback: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// An immutable token inventory.
///
/// Ids are dense in `[0, len)`. The terminator, the sentinels and (unless the
/// vocabulary is closed) all 256 byte-fallback tokens are guaranteed to be
/// present: any that the source file does not list are appended after the
/// listed pieces, so listed pieces keep their ids.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    pieces: Vec<String>,
    kinds: Vec<PieceKind>,
    lookup: HashMap<String, TokenId>,
    specials: Vec<(String, TokenId)>,
    byte_ids: Option<[TokenId; 256]>,
    max_piece_len: usize,
    terminator: TokenId,
    sentinels: Vec<TokenId>,
    fingerprint: u64,
}

fn byte_surface(b: u8) -> String {
    format!("<0x{b:02X}>")
}

fn parse_byte_surface(s: &str) -> Option<u8> {
    let hex = s.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

impl Vocabulary {
    pub fn new<S: Into<String>>(
        pieces: impl IntoIterator<Item = S>,
        terminator: &str,
        sentinels: &[&str],
    ) -> Result<Self> {
        Self::from_file_format(VocabFile {
            pieces: pieces.into_iter().map(Into::into).collect(),
            terminator: terminator.to_string(),
            sentinels: sentinels.iter().map(|s| s.to_string()).collect(),
            byte_fallback: true,
        })
    }

    /// A vocabulary without byte fallback, holding exactly the given pieces
    /// plus any missing specials. Meant for small id-level fixtures.
    pub fn closed<S: Into<String>>(
        pieces: impl IntoIterator<Item = S>,
        terminator: &str,
        sentinels: &[&str],
    ) -> Result<Self> {
        Self::from_file_format(VocabFile {
            pieces: pieces.into_iter().map(Into::into).collect(),
            terminator: terminator.to_string(),
            sentinels: sentinels.iter().map(|s| s.to_string()).collect(),
            byte_fallback: false,
        })
    }

    pub fn from_file_format(file: VocabFile) -> Result<Self> {
        if file.terminator.is_empty() {
            return Err(Error::InvalidVocab("terminator surface is empty".into()));
        }
        let mut pieces = file.pieces;
        let mut index: HashMap<String, TokenId> = HashMap::with_capacity(pieces.len() + 300);
        for (id, p) in pieces.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::InvalidVocab(format!("piece {id} is empty")));
            }
            if index.insert(p.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate piece {p:?}")));
            }
        }
        let mut ensure = |surface: &str, pieces: &mut Vec<String>| -> TokenId {
            if let Some(&id) = index.get(surface) {
                return id;
            }
            let id = pieces.len() as TokenId;
            pieces.push(surface.to_string());
            index.insert(surface.to_string(), id);
            id
        };

        let terminator = ensure(&file.terminator, &mut pieces);
        let mut sentinels = Vec::with_capacity(file.sentinels.len());
        for s in &file.sentinels {
            if s.is_empty() {
                return Err(Error::InvalidVocab("sentinel surface is empty".into()));
            }
            sentinels.push(ensure(s, &mut pieces));
        }
        let byte_ids = if file.byte_fallback {
            let mut ids = [0; 256];
            for (b, slot) in ids.iter_mut().enumerate() {
                *slot = ensure(&byte_surface(b as u8), &mut pieces);
            }
            Some(ids)
        } else {
            None
        };

        let mut specials: Vec<(String, TokenId)> = std::iter::once(terminator)
            .chain(sentinels.iter().copied())
            .map(|id| (pieces[id as usize].clone(), id))
            .collect();
        specials.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        specials.dedup_by_key(|s| s.1);

        let mut kinds = vec![PieceKind::Normal; pieces.len()];
        for &(_, id) in &specials {
            kinds[id as usize] = PieceKind::Special;
        }
        for (b, &id) in byte_ids.iter().flatten().enumerate() {
            if kinds[id as usize] == PieceKind::Special {
                return Err(Error::InvalidVocab(format!(
                    "byte token {} used as a special token",
                    byte_surface(b as u8)
                )));
            }
            kinds[id as usize] = PieceKind::Byte(b as u8);
        }
        // Listed pieces spelled like byte tokens are treated as byte tokens.
        if byte_ids.is_some() {
            for (id, p) in pieces.iter().enumerate() {
                if let (Some(b), PieceKind::Normal) = (parse_byte_surface(p), kinds[id]) {
                    kinds[id] = PieceKind::Byte(b);
                }
            }
        }

        let lookup: HashMap<String, TokenId> = pieces
            .iter()
            .enumerate()
            .filter(|(id, _)| kinds[*id] == PieceKind::Normal)
            .map(|(id, p)| (p.clone(), id as TokenId))
            .collect();
        let max_piece_len = lookup.keys().map(String::len).max().unwrap_or(0);

        let mut h = Fnv1a::default();
        for p in &pieces {
            h.write(p.as_bytes()).write(&[0]);
        }
        h.write_u32(terminator).write(&[u8::from(byte_ids.is_some())]);
        for &s in &sentinels {
            h.write_u32(s);
        }

        Ok(Vocabulary {
            pieces,
            kinds,
            lookup,
            specials,
            byte_ids,
            max_piece_len,
            terminator,
            sentinels,
            fingerprint: h.finish(),
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Identifier carried by every [`TokenSeq`] encoded under this vocabulary.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn terminator(&self) -> TokenId {
        self.terminator
    }

    pub fn sentinels(&self) -> &[TokenId] {
        &self.sentinels
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    /// Id of a piece by its exact surface, including special and byte tokens.
    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.lookup.get(surface).copied().or_else(|| {
            self.specials
                .iter()
                .find(|(s, _)| s == surface)
                .map(|&(_, id)| id)
                .or_else(|| {
                    let ids = self.byte_ids.as_ref()?;
                    parse_byte_surface(surface).map(|b| ids[b as usize])
                })
        })
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        matches!(self.kinds.get(id as usize), Some(PieceKind::Special))
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        let mut ids = Vec::new();
        let mut rest = text;
        let mut first = true;
        while !rest.is_empty() {
            let (plain, special) = self.next_special(rest);
            if !plain.is_empty() {
                let mut normalized = String::with_capacity(plain.len() + 3);
                if first {
                    normalized.push(BOUNDARY);
                }
                normalized.extend(plain.chars().map(|c| if c == ' ' { BOUNDARY } else { c }));
                self.segment(&normalized, &mut ids);
            }
            first = false;
            match special {
                Some((id, len)) => {
                    ids.push(id);
                    rest = &rest[plain.len() + len..];
                }
                None => break,
            }
        }
        TokenSeq::new(ids, self.fingerprint)
    }

    /// Splits off the text before the earliest special-token occurrence.
    fn next_special<'t>(&self, text: &'t str) -> (&'t str, Option<(TokenId, usize)>) {
        for (pos, _) in text.char_indices() {
            let tail = &text[pos..];
            // specials are sorted longest first
            if let Some((s, id)) = self.specials.iter().find(|(s, _)| tail.starts_with(s.as_str())) {
                return (&text[..pos], Some((*id, s.len())));
            }
        }
        (text, None)
    }

    fn segment(&self, text: &str, out: &mut Vec<TokenId>) {
        let mut pos = 0;
        while pos < text.len() {
            let tail = &text[pos..];
            let mut len = self.max_piece_len.min(tail.len());
            let mut matched = None;
            while len > 0 {
                if tail.is_char_boundary(len) {
                    if let Some(&id) = self.lookup.get(&tail[..len]) {
                        matched = Some((id, len));
                        break;
                    }
                }
                len -= 1;
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    let ch = tail.chars().next().expect("non-empty tail");
                    if let Some(byte_ids) = &self.byte_ids {
                        let mut buf = [0u8; 4];
                        for b in ch.encode_utf8(&mut buf).bytes() {
                            out.push(byte_ids[b as usize]);
                        }
                    }
                    pos += ch.len_utf8();
                }
            }
        }
    }

    /// Decodes raw ids. Boundary markers become spaces and one leading space
    /// is dropped.
    pub fn decode_ids(&self, ids: &[TokenId]) -> Result<String> {
        let mut bytes = Vec::with_capacity(ids.len() * 4);
        for &id in ids {
            match self.kinds.get(id as usize) {
                Some(PieceKind::Byte(b)) => bytes.push(*b),
                Some(_) => bytes.extend_from_slice(self.pieces[id as usize].as_bytes()),
                None => return Err(Error::UnknownToken(id)),
            }
        }
        let text = String::from_utf8_lossy(&bytes).replace(BOUNDARY, " ");
        Ok(match text.strip_prefix(' ') {
            Some(stripped) => stripped.to_string(),
            None => text,
        })
    }

    pub fn decode(&self, seq: &TokenSeq) -> Result<String> {
        self.check(seq)?;
        self.decode_ids(&seq.ids)
    }

    /// Fails unless `seq` was produced under this vocabulary.
    pub fn check(&self, seq: &TokenSeq) -> Result<()> {
        if seq.vocab != self.fingerprint {
            return Err(Error::VocabMismatch {
                expected: self.fingerprint,
                found: seq.vocab,
            });
        }
        if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= self.pieces.len()) {
            return Err(Error::UnknownToken(bad));
        }
        Ok(())
    }

    /// Builds a sequence from raw ids, validating every id.
    pub fn seq(&self, ids: Vec<TokenId>) -> Result<TokenSeq> {
        let seq = TokenSeq::new(ids, self.fingerprint);
        self.check(&seq)?;
        Ok(seq)
    }

    pub fn to_file_format(&self) -> VocabFile {
        VocabFile {
            pieces: self.pieces.clone(),
            terminator: self.pieces[self.terminator as usize].clone(),
            sentinels: self
                .sentinels
                .iter()
                .map(|&s| self.pieces[s as usize].clone())
                .collect(),
            byte_fallback: self.byte_ids.is_some(),
        }
    }
}

/// Token ids tagged with the fingerprint of the vocabulary that produced them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    pub vocab: u64,
}

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>, vocab: u64) -> Self {
        TokenSeq { ids, vocab }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Contiguous sub-sequence `[start, end)` under the same vocabulary.
    pub fn slice(&self, start: usize, end: usize) -> TokenSeq {
        TokenSeq::new(self.ids[start..end].to_vec(), self.vocab)
    }

    pub fn concat(&self, other: &TokenSeq) -> Result<TokenSeq> {
        same_vocab(self, other)?;
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        Ok(TokenSeq::new(ids, self.vocab))
    }
}

pub(crate) fn same_vocab(a: &TokenSeq, b: &TokenSeq) -> Result<()> {
    if a.vocab != b.vocab {
        return Err(Error::VocabMismatch {
            expected: a.vocab,
            found: b.vocab,
        });
    }
    Ok(())
}

/// First offset at which `needle` occurs contiguously in `haystack`.
pub fn find_subsequence(needle: &[TokenId], haystack: &[TokenId]) -> Option<usize> {
    if needle.is_empty() {
        return Some(0);
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// True iff `needle` appears as a contiguous run of ids in `haystack`.
pub fn is_token_subsequence(needle: &TokenSeq, haystack: &TokenSeq) -> Result<bool> {
    same_vocab(needle, haystack)?;
    Ok(find_subsequence(&needle.ids, &haystack.ids).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocabulary {
        Vocabulary::new(
            ["▁(19", "71", ")", "▁1971", "▁the", "▁IRA", "a", "aa", "▁"],
            "</s>",
            &["<extra_id_0>", "<extra_id_1>"],
        )
        .unwrap()
    }

    fn pieces(v: &Vocabulary, s: &TokenSeq) -> Vec<String> {
        s.ids.iter().map(|&id| v.piece(id).unwrap().to_string()).collect()
    }

    #[test]
    fn empty_text_encodes_to_nothing() {
        let v = toy();
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&v.encode("")).unwrap(), "");
    }

    #[test]
    fn parenthesized_year_splits_differently() {
        let v = toy();
        assert_eq!(pieces(&v, &v.encode("(1971)")), ["▁(19", "71", ")"]);
        assert_eq!(pieces(&v, &v.encode("1971")), ["▁1971"]);
    }

    #[test]
    fn longest_match_wins() {
        let v = Vocabulary::new(["a", "aa"], "</s>", &[]).unwrap();
        // the leading boundary marker has no piece and falls back to bytes
        let ids = v.encode("aa").ids;
        let tail: Vec<&str> = ids[3..].iter().map(|&i| v.piece(i).unwrap()).collect();
        assert_eq!(tail, ["aa"]);
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn decode_examples() {
        let v = toy();
        let ids = ["▁(19", "71", ")"].map(|p| v.id_of(p).unwrap()).to_vec();
        assert_eq!(v.decode_ids(&ids).unwrap(), "(1971)");
        let ids = ["▁the", "▁IRA"].map(|p| v.id_of(p).unwrap()).to_vec();
        assert_eq!(v.decode_ids(&ids).unwrap(), "the IRA");
        assert_eq!(v.decode_ids(&[]).unwrap(), "");
    }

    #[test]
    fn decode_rejects_unknown_ids() {
        let v = toy();
        let bad = v.len() as TokenId;
        assert!(matches!(v.decode_ids(&[bad]), Err(Error::UnknownToken(id)) if id == bad));
        assert!(v.seq(vec![bad]).is_err());
    }

    #[test]
    fn decode_rejects_foreign_sequences() {
        let v = toy();
        let other = Vocabulary::new(["x"], "</s>", &[]).unwrap();
        let seq = other.encode("x");
        assert!(matches!(v.decode(&seq), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn subsequence_examples() {
        let v = toy();
        let hay = v.encode("(1971)");
        assert!(is_token_subsequence(&v.encode(""), &hay).unwrap());
        assert!(!is_token_subsequence(&v.encode("1971"), &hay).unwrap());
        let needle = v.seq(vec![v.id_of("71").unwrap(), v.id_of(")").unwrap()]).unwrap();
        assert!(is_token_subsequence(&needle, &hay).unwrap());
        let other = Vocabulary::new(["x"], "</s>", &[]).unwrap();
        assert!(is_token_subsequence(&other.encode("x"), &hay).is_err());
    }

    #[test]
    fn specials_are_atomic() {
        let v = toy();
        let seq = v.encode("Answer:<extra_id_0>.");
        let sentinel = v.id_of("<extra_id_0>").unwrap();
        assert_eq!(seq.ids.iter().filter(|&&i| i == sentinel).count(), 1);
        assert_eq!(v.decode(&seq).unwrap(), "Answer:<extra_id_0>.");
        let seq = v.encode("<extra_id_0>the<extra_id_1>");
        assert_eq!(seq.ids[0], sentinel);
        assert_eq!(v.decode(&seq).unwrap(), "<extra_id_0>the<extra_id_1>");
    }

    #[test]
    fn byte_fallback_covers_unicode() {
        let v = toy();
        for s in ["héllo wörld", "日本語", "tab\there", "  two leading"] {
            assert_eq!(v.decode(&v.encode(s)).unwrap(), s);
        }
    }

    #[test]
    fn specials_and_bytes_are_always_present() {
        let v = Vocabulary::new(Vec::<String>::new(), "</s>", &["<extra_id_0>"]).unwrap();
        assert_eq!(v.len(), 2 + 256);
        assert_eq!(v.terminator(), 0);
        assert_eq!(v.sentinels(), &[1]);
        assert!(v.is_special(0));
        assert_eq!(v.id_of("<0x41>"), Some(2 + 0x41));
    }

    #[test]
    fn closed_vocabulary_has_no_byte_tokens() {
        let v = Vocabulary::closed(["</s>", "▁x", "▁y", "▁z"], "</s>", &[]).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.decode(&v.encode("x y")).unwrap(), "x y");
        // uncovered characters are dropped
        assert_eq!(v.encode("x q").len(), 1);
        assert_eq!(v.id_of("<0x41>"), None);
    }

    #[test]
    fn listed_ids_are_preserved() {
        let v = Vocabulary::new(["b", "</s>", "a"], "</s>", &[]).unwrap();
        assert_eq!(v.id_of("b"), Some(0));
        assert_eq!(v.terminator(), 1);
        assert_eq!(v.id_of("a"), Some(2));
    }

    #[test]
    fn duplicate_pieces_are_rejected() {
        assert!(Vocabulary::new(["a", "a"], "</s>", &[]).is_err());
        assert!(Vocabulary::new(["a", ""], "</s>", &[]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let v = toy();
        let json = serde_json::to_string(&v.to_file_format()).unwrap();
        let back = Vocabulary::from_json(&json).unwrap();
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_eq!(back.len(), v.len());
    }
}
