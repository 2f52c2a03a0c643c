//! Packing of several trials into one sequence with a block-diagonal causal
//! mask.
//!
//! Segment `i` is laid out as `[kept visual tokens of trial i] [text] [generated]`
//! and positions restart at zero at each segment start.

use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{ensure, Result};
use crate::sampler::TrialPlan;
use crate::toymodel::VideoTokenStream;

pub type TokenId = u32;

/// One packed position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PackedToken {
    /// Flat `frame * M + patch` index into the source stream.
    Visual(usize),
    Text(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub visual_len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    pub fn last(&self) -> usize {
        self.start + self.len - 1
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PackedSequence {
    segments: Vec<Segment>,
    tokens: Vec<PackedToken>,
    segment_of: Vec<usize>,
    pos_in_segment: Vec<usize>,
    text_len: usize,
    generated: usize,
    #[serde(skip)]
    video: Arc<VideoTokenStream>,
}

/// Which (query, key) pairs may interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum AttentionMaskSpec {
    /// `q <= p` and both in the same segment.
    #[default]
    BlockDiagonalCausal,
    /// Plain causal over the whole packed sequence. Leaks across segments;
    /// kept for contrast in tests and diagnostics.
    Causal,
}

impl AttentionMaskSpec {
    pub fn allows(&self, packed: &PackedSequence, p: usize, q: usize) -> bool {
        match self {
            Self::BlockDiagonalCausal => q <= p && packed.segment_of[p] == packed.segment_of[q],
            Self::Causal => q <= p,
        }
    }

    /// Keys visible from query `p`. Always a contiguous range ending at `p`.
    pub fn key_range(&self, packed: &PackedSequence, p: usize) -> Range<usize> {
        match self {
            Self::BlockDiagonalCausal => packed.segments[packed.segment_of[p]].start..p + 1,
            Self::Causal => 0..p + 1,
        }
    }
}

/// Gathers trial `plan`'s kept tokens as flat stream indices, ascending in
/// the trial's own order.
fn gather(plan: &TrialPlan, video: &VideoTokenStream) -> Result<Vec<usize>> {
    let m = video.patches();
    let len = plan.frame_indices.len() * m;
    ensure!(
        plan.frame_indices.iter().all(|&f| f < video.frames()),
        Contract,
        "plan references a frame outside the {}-frame video",
        video.frames()
    );
    ensure!(
        plan.token_keep.windows(2).all(|w| w[0] < w[1]) && plan.token_keep.iter().all(|&t| t < len),
        Contract,
        "token_keep must be ascending and below {len}"
    );
    Ok(plan
        .token_keep
        .iter()
        .map(|&g| plan.frame_indices[g / m] * m + g % m)
        .collect())
}

pub fn pack(
    plans: &[TrialPlan],
    video: &Arc<VideoTokenStream>,
    text: &[TokenId],
) -> Result<PackedSequence> {
    ensure!(!plans.is_empty(), Contract, "cannot pack zero trials");
    let per_segment = plans
        .iter()
        .map(|p| gather(p, video))
        .collect::<Result<Vec<_>>>()?;
    let segments: Vec<Vec<PackedToken>> = per_segment
        .into_iter()
        .map(|vis| {
            vis.into_iter()
                .map(PackedToken::Visual)
                .chain(text.iter().copied().map(PackedToken::Text))
                .collect()
        })
        .collect();
    ensure!(
        segments.iter().all(|s| !s.is_empty()),
        Contract,
        "a trial with no kept tokens and no text would form an empty segment"
    );
    Ok(PackedSequence::from_segments(
        segments,
        text.len(),
        0,
        Arc::clone(video),
    ))
}

/// A single unsubsampled sequence `<all tokens of frames, text>`.
pub fn pack_single(
    frame_indices: &[usize],
    video: &Arc<VideoTokenStream>,
    text: &[TokenId],
) -> Result<PackedSequence> {
    let plan = TrialPlan {
        frame_indices: frame_indices.to_vec(),
        token_keep: (0..frame_indices.len() * video.patches()).collect(),
        alpha: 1.0,
    };
    pack(std::slice::from_ref(&plan), video, text)
}

impl PackedSequence {
    fn from_segments(
        contents: Vec<Vec<PackedToken>>,
        text_len: usize,
        generated: usize,
        video: Arc<VideoTokenStream>,
    ) -> Self {
        let total: usize = contents.iter().map(Vec::len).sum();
        let mut segments = Vec::with_capacity(contents.len());
        let mut tokens = Vec::with_capacity(total);
        let mut segment_of = Vec::with_capacity(total);
        let mut pos_in_segment = Vec::with_capacity(total);
        for (i, seg) in contents.into_iter().enumerate() {
            let start = tokens.len();
            let visual_len = seg
                .iter()
                .take_while(|t| matches!(t, PackedToken::Visual(_)))
                .count();
            segments.push(Segment {
                start,
                len: seg.len(),
                visual_len,
            });
            segment_of.extend(std::iter::repeat_n(i, seg.len()));
            pos_in_segment.extend(0..seg.len());
            tokens.extend(seg);
        }
        Self {
            segments,
            tokens,
            segment_of,
            pos_in_segment,
            text_len,
            generated,
            video,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn tokens(&self) -> &[PackedToken] {
        &self.tokens
    }

    pub fn segment_of(&self) -> &[usize] {
        &self.segment_of
    }

    pub fn pos_in_segment(&self) -> &[usize] {
        &self.pos_in_segment
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn generated(&self) -> usize {
        self.generated
    }

    pub fn video(&self) -> &Arc<VideoTokenStream> {
        &self.video
    }

    /// Tokens of segment `i`, as an owned single-segment sequence.
    pub fn segment_alone(&self, i: usize) -> PackedSequence {
        let seg = self.segments[i];
        Self::from_segments(
            vec![self.tokens[seg.range()].to_vec()],
            self.text_len,
            self.generated,
            Arc::clone(&self.video),
        )
    }

    /// Appends `token` to the end of every segment.
    pub fn append_token(&self, token: TokenId, max_positions: usize) -> Result<PackedSequence> {
        let grown = self.len() + self.segments.len();
        ensure!(
            grown <= max_positions,
            Contract,
            "appending would grow the packed sequence to {grown} > {max_positions} positions"
        );
        let contents = self
            .segments
            .iter()
            .map(|s| {
                let mut v = self.tokens[s.range()].to_vec();
                v.push(PackedToken::Text(token));
                v
            })
            .collect();
        Ok(Self::from_segments(
            contents,
            self.text_len,
            self.generated + 1,
            Arc::clone(&self.video),
        ))
    }

    /// Final position of each segment, in trial order.
    pub fn last_positions(&self) -> Vec<usize> {
        self.segments.iter().map(Segment::last).collect()
    }

    /// Re-derives every structural invariant from scratch.
    pub fn validate(&self) -> Result<()> {
        let mut expect_start = 0;
        for (i, s) in self.segments.iter().enumerate() {
            ensure!(
                s.start == expect_start,
                Contract,
                "segment {i} is not contiguous"
            );
            ensure!(
                s.len == s.visual_len + self.text_len + self.generated,
                Contract,
                "segment {i} has length {} but holds {} visual + {} text + {} generated",
                s.len,
                s.visual_len,
                self.text_len,
                self.generated
            );
            for (k, p) in s.range().enumerate() {
                ensure!(self.segment_of[p] == i, Contract, "segment id wrong at {p}");
                ensure!(
                    self.pos_in_segment[p] == k,
                    Contract,
                    "position wrong at {p}"
                );
                let is_visual = matches!(self.tokens[p], PackedToken::Visual(_));
                ensure!(
                    is_visual == (k < s.visual_len),
                    Contract,
                    "visual/text order broken at {p}"
                );
            }
            expect_start += s.len;
        }
        ensure!(
            expect_start == self.tokens.len()
                && self.segment_of.len() == self.tokens.len()
                && self.pos_in_segment.len() == self.tokens.len(),
            Contract,
            "segments do not cover the sequence"
        );
        Ok(())
    }

    /// Segment table and tokens as pretty JSON, for golden files.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("packed sequence is always serializable")
    }
}
