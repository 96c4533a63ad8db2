use crate::error::{Error, Result};
use crate::types::TokenId;
use std::ops::Range;

/// A prompt split into prefix, context, and suffix, with the query located
/// inside the suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts {
    pub prefix: Vec<TokenId>,
    pub context: Vec<TokenId>,
    pub suffix: Vec<TokenId>,
    /// Indices of the query tokens within `suffix`.
    pub query_span: Range<usize>,
}

impl PromptParts {
    pub fn new(
        prefix: Vec<TokenId>,
        context: Vec<TokenId>,
        suffix: Vec<TokenId>,
        query_span: Range<usize>,
    ) -> Result<Self> {
        if query_span.end > suffix.len() || query_span.start > query_span.end {
            return Err(Error::usage(format!(
                "query span {query_span:?} outside suffix of length {}",
                suffix.len()
            )));
        }
        Ok(PromptParts {
            prefix,
            context,
            suffix,
            query_span,
        })
    }

    /// The whole prompt as one sequence.
    pub fn flat(&self) -> Vec<TokenId> {
        let mut v = Vec::with_capacity(self.prefix.len() + self.context.len() + self.suffix.len());
        v.extend_from_slice(&self.prefix);
        v.extend_from_slice(&self.context);
        v.extend_from_slice(&self.suffix);
        v
    }

    pub fn query(&self) -> &[TokenId] {
        &self.suffix[self.query_span.clone()]
    }
}

/// The context right-padded to a whole number of fixed-length chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSet {
    chunk_len: usize,
    pad_count: usize,
    chunks: Vec<Vec<TokenId>>,
}

impl ChunkSet {
    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn pad_count(&self) -> usize {
        self.pad_count
    }

    /// Number of chunks b.
    pub fn count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunks(&self) -> &[Vec<TokenId>] {
        &self.chunks
    }

    /// Concatenate chunks and strip the padding; inverse of [`make_chunks`].
    pub fn reconstruct_context(&self) -> Vec<TokenId> {
        let mut v: Vec<TokenId> = self.chunks.iter().flatten().copied().collect();
        v.truncate(v.len() - self.pad_count);
        v
    }
}

/// Right-pad `context` with `pad_token` until its length is a multiple of
/// `chunk_len`, then split into consecutive chunks.
pub fn make_chunks(context: &[TokenId], chunk_len: usize, pad_token: TokenId) -> Result<ChunkSet> {
    if chunk_len < 1 {
        return Err(Error::usage("chunk length must be >= 1"));
    }
    if context.is_empty() {
        return Err(Error::usage(
            "context is empty; use pass-through generation instead of chunking",
        ));
    }
    let rem = context.len() % chunk_len;
    let pad_count = if rem == 0 { 0 } else { chunk_len - rem };
    let mut padded = context.to_vec();
    padded.resize(context.len() + pad_count, pad_token);
    let chunks = padded.chunks(chunk_len).map(|c| c.to_vec()).collect();
    Ok(ChunkSet {
        chunk_len,
        pad_count,
        chunks,
    })
}

/// `[prefix, chunk_i, suffix]` for every chunk, preserving prompt structure.
pub fn build_prompts(prefix: &[TokenId], chunks: &ChunkSet, suffix: &[TokenId]) -> Vec<Vec<TokenId>> {
    chunks
        .chunks()
        .iter()
        .map(|c| {
            let mut v = Vec::with_capacity(prefix.len() + c.len() + suffix.len());
            v.extend_from_slice(prefix);
            v.extend_from_slice(c);
            v.extend_from_slice(suffix);
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_ten_into_three_chunks_of_four() {
        let c: Vec<TokenId> = (10..20).collect();
        let set = make_chunks(&c, 4, 0).unwrap();
        assert_eq!(set.pad_count(), 2);
        assert_eq!(set.count(), 3);
        assert!(set.chunks().iter().all(|ch| ch.len() == 4));
        assert_eq!(set.reconstruct_context(), c);
    }

    #[test]
    fn exact_multiple_needs_no_padding() {
        let c: Vec<TokenId> = (0..8).collect();
        let set = make_chunks(&c, 4, 0).unwrap();
        assert_eq!(set.pad_count(), 0);
        assert_eq!(set.count(), 2);
    }

    #[test]
    fn short_context_degenerates_to_single_padded_chunk() {
        let c: Vec<TokenId> = (0..5).collect();
        let set = make_chunks(&c, 8, 9).unwrap();
        assert_eq!(set.pad_count(), 3);
        assert_eq!(set.count(), 1);
        assert_eq!(set.chunks()[0], vec![0, 1, 2, 3, 4, 9, 9, 9]);
    }

    #[test]
    fn empty_context_is_usage_error() {
        assert!(matches!(make_chunks(&[], 4, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn prompts_wrap_each_chunk() {
        let c: Vec<TokenId> = (0..8).collect();
        let set = make_chunks(&c, 4, 99).unwrap();
        let prompts = build_prompts(&[71, 72], &set, &[81]);
        assert_eq!(prompts.len(), 2);
        for (i, p) in prompts.iter().enumerate() {
            assert_eq!(p.len(), 2 + 4 + 1);
            assert_eq!(&p[..2], &[71, 72]);
            assert_eq!(&p[2..6], set.chunks()[i].as_slice());
            assert_eq!(p[6], 81);
        }
    }

    #[test]
    fn empty_affixes_leave_chunks_bare() {
        let c: Vec<TokenId> = (0..4).collect();
        let set = make_chunks(&c, 4, 0).unwrap();
        let prompts = build_prompts(&[], &set, &[]);
        assert_eq!(prompts, vec![c]);
    }

    #[test]
    fn query_span_validated() {
        assert!(PromptParts::new(vec![], vec![1], vec![5, 6], 1..2).is_ok());
        assert!(PromptParts::new(vec![], vec![1], vec![5, 6], 1..3).is_err());
    }
}
