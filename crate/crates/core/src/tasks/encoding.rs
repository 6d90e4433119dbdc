//! Task encodings: instance → input vectors, answers → head targets, and
//! the feedback encoding used during the answer phase.
//!
//! Every task reserves the last two input channels for the ⟨eoi⟩ and ⟨ans⟩
//! tokens; encoders emit data channels only and the episode engine sets the
//! token bits.
//!
//! Graph tasks: an edge is two one-hot label blocks of size `n_max` plus the
//! two token channels (width 2·n_max + 2). One-hot index equals the label,
//! so index 0 of each block (and of each output head) is never a node label
//! — it is reserved as the answer terminator. Labels therefore live in
//! [1, n_max−1].
//!
//! Associative Recall: one digit per timestep over a 10-way one-hot, one
//! delimiter channel between items, plus the token channels (width 13).
//! Output head is 11-way: index 0 stops, index d+1 means digit d.
//!
//! Convex Hull: one point per timestep as two coordinate channels plus the
//! token channels (width 4). Output head is (max_points+1)-way pointing at
//! input positions (1-based); index 0 stops.

use super::{AnswerStep, Query, RawProblem, TaskInstance, TaskKind};
use crate::error::{DncError, Result};
use crate::tensor::Tensor;

/// Graph label-space default: labels 1..=25 plus the reserved index 0,
/// sized so the largest curriculum (25-node graphs) fits.
pub const GRAPH_N_MAX_DEFAULT: usize = 26;
/// Largest usable node label under the default label space.
pub const GRAPH_LABEL_MAX: usize = GRAPH_N_MAX_DEFAULT - 1;
/// Hull pointer-space default: positions 1..=35 (largest curriculum).
pub const HULL_MAX_POINTS_DEFAULT: usize = 35;

pub const RECALL_WIDTH: usize = 13;
const RECALL_DIGITS: usize = 10;
const RECALL_DELIM: usize = 10;

/// Encoding geometry for one task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Encoding {
    pub kind: TaskKind,
    /// Graph tasks: one-hot block size (label space). Hull: max point count.
    /// Unused for recall.
    pub n_max: usize,
}

impl Encoding {
    pub fn new(kind: TaskKind, n_max: usize) -> Self {
        Encoding { kind, n_max }
    }

    pub fn default_for(kind: TaskKind) -> Self {
        let n_max = match kind {
            TaskKind::ShortestPath | TaskKind::MinCut => GRAPH_N_MAX_DEFAULT,
            TaskKind::ConvexHull => HULL_MAX_POINTS_DEFAULT,
            TaskKind::AssociativeRecall => 0,
        };
        Encoding { kind, n_max }
    }

    /// Input vector width, token channels included.
    pub fn input_width(&self) -> usize {
        match self.kind {
            TaskKind::ShortestPath | TaskKind::MinCut => 2 * self.n_max + 2,
            TaskKind::AssociativeRecall => RECALL_WIDTH,
            TaskKind::ConvexHull => 4,
        }
    }

    /// Output head widths. Index 0 of the first head is the terminator.
    pub fn head_widths(&self) -> Vec<usize> {
        match self.kind {
            TaskKind::ShortestPath | TaskKind::MinCut => vec![self.n_max, self.n_max],
            TaskKind::AssociativeRecall => vec![RECALL_DIGITS + 1],
            TaskKind::ConvexHull => vec![self.n_max + 1],
        }
    }

    pub fn output_width(&self) -> usize {
        self.head_widths().iter().sum()
    }

    pub fn eoi_channel(&self) -> usize {
        self.input_width() - 2
    }

    pub fn ans_channel(&self) -> usize {
        self.input_width() - 1
    }

    /// Description-phase data vectors (token channels zero).
    pub fn description_steps(&self, instance: &TaskInstance) -> Result<Vec<Tensor>> {
        match (&instance.raw, self.kind) {
            (RawProblem::Graph { edges }, TaskKind::ShortestPath | TaskKind::MinCut) => {
                edges.iter().map(|&(u, v)| self.encode_edge(u, v)).collect()
            }
            (RawProblem::Items { items }, TaskKind::AssociativeRecall) => {
                let mut steps = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    for &d in item {
                        steps.push(self.encode_digit(d));
                    }
                    if i + 1 < items.len() {
                        let mut delim = Tensor::zeros(self.input_width(), 1);
                        delim.data[RECALL_DELIM] = 1.0;
                        steps.push(delim);
                    }
                }
                Ok(steps)
            }
            (RawProblem::Points { points }, TaskKind::ConvexHull) => {
                Ok(points.iter().map(|&(x, y)| self.encode_point(x, y)).collect())
            }
            _ => Err(DncError::Data("instance payload does not match the task".into())),
        }
    }

    /// Query-phase data vectors. The ⟨eoi⟩ token rides on the first query
    /// step (or, when a task has no query, on the following step).
    pub fn query_steps(&self, instance: &TaskInstance) -> Result<Vec<Tensor>> {
        match (&instance.query, self.kind) {
            (Query::SourceTarget { s, t }, TaskKind::ShortestPath) => Ok(vec![self.encode_edge(*s, *t)?]),
            (Query::None, TaskKind::MinCut | TaskKind::ConvexHull) => Ok(Vec::new()),
            (Query::Item { digits }, TaskKind::AssociativeRecall) => {
                Ok(digits.iter().map(|&d| self.encode_digit(d)).collect())
            }
            _ => Err(DncError::Data("query does not match the task".into())),
        }
    }

    /// Answer-phase feedback: the encoding of the previous answer token
    /// (token channels zero; a Stop feeds back as all-zero data).
    pub fn feedback(&self, instance: &TaskInstance, step: &AnswerStep) -> Result<Tensor> {
        match (step, self.kind) {
            (AnswerStep::Stop, _) => Ok(Tensor::zeros(self.input_width(), 1)),
            (AnswerStep::Edge(u, v), TaskKind::ShortestPath | TaskKind::MinCut) => self.encode_edge(*u, *v),
            (AnswerStep::Digit(d), TaskKind::AssociativeRecall) => Ok(self.encode_digit(*d)),
            (AnswerStep::Point(p), TaskKind::ConvexHull) => {
                let RawProblem::Points { points } = &instance.raw else {
                    return Err(DncError::Data("hull feedback without points".into()));
                };
                let idx = *p as usize;
                if idx == 0 || idx > points.len() {
                    return Err(DncError::Data(format!("point position {idx} out of range")));
                }
                let (x, y) = points[idx - 1];
                Ok(self.encode_point(x, y))
            }
            _ => Err(DncError::Data("feedback token does not match the task".into())),
        }
    }

    /// Per-head target indices for one answer token.
    pub fn target_indices(&self, step: &AnswerStep) -> Result<Vec<usize>> {
        match (step, self.kind) {
            (AnswerStep::Stop, TaskKind::ShortestPath | TaskKind::MinCut) => Ok(vec![0, 0]),
            (AnswerStep::Stop, _) => Ok(vec![0]),
            (AnswerStep::Edge(u, v), TaskKind::ShortestPath | TaskKind::MinCut) => {
                let (u, v) = (*u as usize, *v as usize);
                if u == 0 || u >= self.n_max || v == 0 || v >= self.n_max {
                    return Err(DncError::Data(format!("label overflow: edge ({u},{v}) vs n_max {}", self.n_max)));
                }
                Ok(vec![u, v])
            }
            (AnswerStep::Digit(d), TaskKind::AssociativeRecall) => Ok(vec![*d as usize + 1]),
            (AnswerStep::Point(p), TaskKind::ConvexHull) => {
                let p = *p as usize;
                if p == 0 || p > self.n_max {
                    return Err(DncError::Data(format!("position overflow: {p} vs max {}", self.n_max)));
                }
                Ok(vec![p])
            }
            _ => Err(DncError::Data("target token does not match the task".into())),
        }
    }

    /// Decode one output step by per-head argmax. Index 0 on the first head
    /// is the terminator.
    pub fn decode_logits(&self, logits: &Tensor) -> Result<AnswerStep> {
        if logits.len() != self.output_width() {
            return Err(DncError::shape(
                "decode_logits",
                format!("{}", self.output_width()),
                format!("{}", logits.len()),
            ));
        }
        let widths = self.head_widths();
        let mut heads = Vec::with_capacity(widths.len());
        let mut off = 0;
        for w in &widths {
            let head = crate::math::slice(logits, off, *w);
            heads.push(head.argmax());
            off += w;
        }
        Ok(match self.kind {
            TaskKind::ShortestPath | TaskKind::MinCut => {
                if heads[0] == 0 {
                    AnswerStep::Stop
                } else {
                    AnswerStep::Edge(heads[0] as u16, heads[1] as u16)
                }
            }
            TaskKind::AssociativeRecall => {
                if heads[0] == 0 {
                    AnswerStep::Stop
                } else {
                    AnswerStep::Digit(heads[0] as u8 - 1)
                }
            }
            TaskKind::ConvexHull => {
                if heads[0] == 0 {
                    AnswerStep::Stop
                } else {
                    AnswerStep::Point(heads[0] as u16)
                }
            }
        })
    }

    fn encode_edge(&self, u: u16, v: u16) -> Result<Tensor> {
        let (u, v) = (u as usize, v as usize);
        if u == 0 || u >= self.n_max || v == 0 || v >= self.n_max {
            return Err(DncError::Data(format!(
                "label overflow: edge ({u},{v}) vs n_max {}",
                self.n_max
            )));
        }
        let mut x = Tensor::zeros(self.input_width(), 1);
        x.data[u] = 1.0;
        x.data[self.n_max + v] = 1.0;
        Ok(x)
    }

    fn encode_digit(&self, d: u8) -> Tensor {
        let mut x = Tensor::zeros(self.input_width(), 1);
        x.data[d as usize] = 1.0;
        x
    }

    fn encode_point(&self, px: f64, py: f64) -> Tensor {
        let mut x = Tensor::zeros(self.input_width(), 1);
        x.data[0] = px;
        x.data[1] = py;
        x
    }

    /// Longest possible answer (terminator included) for a lesson, used to
    /// bound free decoding: 2x the longest training target.
    pub fn max_answer_len(&self, lesson: &super::LessonSpec) -> usize {
        let longest_target = match *lesson {
            super::LessonSpec::ShortestPath { path_len, .. } => path_len.1 + 1,
            super::LessonSpec::MinCut { cut, .. } => cut.1 + 1,
            super::LessonSpec::AssociativeRecall { digits, .. } => digits.1 + 1,
            super::LessonSpec::ConvexHull { points, .. } => points.1 + 1,
        };
        2 * longest_target
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RootSeed, Stream};
    use crate::tasks::{default_curriculum, generate, LessonSpec};

    #[test]
    fn graph_width_formula() {
        let enc = Encoding::new(TaskKind::ShortestPath, 25);
        assert_eq!(enc.input_width(), 52);
        assert_eq!(enc.output_width(), 50);
        assert_eq!(enc.head_widths(), vec![25, 25]);
    }

    #[test]
    fn edge_one_hot_positions() {
        let enc = Encoding::new(TaskKind::ShortestPath, 25);
        let x = enc.encode_edge(1, 2).unwrap();
        let hot: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(hot, vec![1, 25 + 2]);
        // Token channels untouched.
        assert_eq!(x.data[enc.eoi_channel()], 0.0);
        assert_eq!(x.data[enc.ans_channel()], 0.0);
        // Label overflow rejected.
        assert!(enc.encode_edge(25, 1).is_err());
        assert!(enc.encode_edge(0, 1).is_err());
    }

    #[test]
    fn recall_description_layout() {
        let enc = Encoding::default_for(TaskKind::AssociativeRecall);
        let mut rng = RootSeed(9).stream(Stream::Dataset(7));
        let lesson = LessonSpec::AssociativeRecall {
            items: (3, 3),
            digits: (2, 2),
        };
        let inst = generate(&lesson, 1, 0, &mut rng, false).unwrap();
        let steps = enc.description_steps(&inst).unwrap();
        // 3 items x 2 digits + 2 delimiters.
        assert_eq!(steps.len(), 8);
        assert_eq!(steps[2].data[RECALL_DELIM], 1.0);
        assert_eq!(steps[5].data[RECALL_DELIM], 1.0);
        let q = enc.query_steps(&inst).unwrap();
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn decode_roundtrip_on_generated_instances() {
        let mut count = 0;
        for kind in TaskKind::all() {
            let enc = Encoding::default_for(kind);
            let lesson = default_curriculum(kind)[0];
            let mut rng = RootSeed(13).stream(Stream::Dataset(8));
            for i in 0..250 {
                let inst = generate(&lesson, 1, i, &mut rng, false).unwrap();
                // Encode every target token into per-head one-hot logits and
                // decode it back.
                for step in &inst.target {
                    let targets = enc.target_indices(step).unwrap();
                    let widths = enc.head_widths();
                    let mut logits = Tensor::zeros(enc.output_width(), 1);
                    let mut off = 0;
                    for (h, w) in widths.iter().enumerate() {
                        logits.data[off + targets[h]] = 5.0;
                        off += w;
                    }
                    assert_eq!(&enc.decode_logits(&logits).unwrap(), step);
                }
                // Description and query shapes are consistent.
                for s in enc.description_steps(&inst).unwrap() {
                    assert_eq!(s.len(), enc.input_width());
                }
                count += 1;
            }
        }
        assert_eq!(count, 1000);
    }
}
