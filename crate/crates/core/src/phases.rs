//! Expected number of transmission phases `E(N)` under noisy one-bit feedback.
//!
//! The destination broadcasts ACK or NACK after every phase and all
//! transmitters observe it through one binary symmetric channel that delivers
//! the true symbol with probability `p`. A block that observes ACK stops; a
//! NACK hands the next phase to the next relay. After the last relay there is
//! nothing left to hand over, so a NACK observed at level `K` always costs
//! `K + 1` phases.
//!
//! Three independent evaluations are provided and must agree:
//!
//! * [`build_phase_tree`] + [`expected_phases_tree`]: explicit enumeration of
//!   every positive/negative block and feedback branch (`O(2^K)` nodes).
//! * [`expected_phases_matrix`]: feedback matrix applied to per-level
//!   success/failure vectors, terminated masses combined by Hadamard product
//!   and weighted by the phase-count vector `[1, 2, ..., K + 1]`.
//! * [`expected_phases`]: the `O(K)` level-mass recurrence used everywhere else.

use std::fmt;

use crate::error::{self, Error, Result};
use crate::matrix::{hadamard, Matrix};

/// Largest relay count accepted by the analytic routes.
pub const MAX_RELAYS: usize = 30;
/// Largest relay count for which the explicit tree is materialized.
pub const MAX_TREE_RELAYS: usize = 20;
/// Tolerance on the total leaf probability of a phase tree.
pub const TREE_PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Reliability `p = Pr(ACK|ACK) = Pr(NACK|NACK)` of the feedback link.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BscParam(f64);

impl BscParam {
    pub fn new(p: f64) -> Result<Self> {
        error::probability("p", p).map(Self)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Probability that a feedback symbol is flipped.
    pub fn crossover(self) -> f64 {
        1.0 - self.0
    }

    pub fn matrix(self) -> FeedbackMatrix {
        FeedbackMatrix { p: self }
    }
}

/// `[[p, 1-p], [1-p, p]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackMatrix {
    p: BscParam,
}

impl FeedbackMatrix {
    pub fn to_matrix(self) -> Matrix {
        let p = self.p.value();
        Matrix::from_rows(&[&[p, 1.0 - p], &[1.0 - p, p]]).expect("2x2 literal")
    }
}

/// Decode probabilities per tree level: `[P_SD, P_R1D, ..., P_R(K-1)D]`.
///
/// A depth-`K` tree reads entries `0..K`; extra entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeProfile {
    levels: Vec<f64>,
}

impl DecodeProfile {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ShortProfile { needed: 1, got: 0 });
        }
        for &q in &levels {
            error::probability("decode probability", q)?;
        }
        Ok(Self { levels })
    }

    /// One-level profile from the direct-link failure probability `P̄_SD`.
    pub fn from_source_outage(p_bar_sd: f64) -> Result<Self> {
        error::probability("p_bar_sd", p_bar_sd)?;
        Ok(Self {
            levels: vec![1.0 - p_bar_sd],
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn p_sd(&self) -> f64 {
        self.levels[0]
    }

    fn require(&self, num_relays: usize) -> Result<()> {
        if self.levels.len() < num_relays {
            Err(Error::ShortProfile {
                needed: num_relays,
                got: self.levels.len(),
            })
        } else {
            Ok(())
        }
    }
}

fn check_relays(num_relays: usize, max: usize) -> Result<()> {
    if num_relays == 0 {
        Err(Error::NoRelays)
    } else if num_relays > max {
        Err(Error::TooManyRelays {
            requested: num_relays,
            max,
        })
    } else {
        Ok(())
    }
}

/// `E(N) = (2 P̄_SD - 1) p + 2 - P̄_SD` for a single relay.
pub fn expected_phases_one_relay(p_bar_sd: f64, p: BscParam) -> Result<f64> {
    error::probability("p_bar_sd", p_bar_sd)?;
    Ok((2.0 * p_bar_sd - 1.0) * p.value() + 2.0 - p_bar_sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slope {
    Decreasing,
    Flat,
    Increasing,
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slope::Decreasing => "decreasing",
            Slope::Flat => "flat",
            Slope::Increasing => "increasing",
        })
    }
}

/// Direction in which the one-relay `E(N)` moves as feedback gets more reliable.
pub fn phase_derivative_sign(p_bar_sd: f64) -> Result<Slope> {
    error::probability("p_bar_sd", p_bar_sd)?;
    let slope = 2.0 * p_bar_sd - 1.0;
    Ok(if slope < 0.0 {
        Slope::Decreasing
    } else if slope > 0.0 {
        Slope::Increasing
    } else {
        Slope::Flat
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// The destination has decoded at this feedback instant.
    Positive,
    /// The destination has not decoded.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feedback {
    Ack,
    Nack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Block,
    /// Outcome of the feedback observed after the parent block.
    Branch(Feedback),
}

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseNode {
    pub kind: BlockKind,
    pub role: NodeRole,
    pub level: u16,
    /// Product of all branch probabilities from the root down to this node.
    pub path_probability: f64,
    /// Phase count charged when the path ends here.
    pub terminal_multiplier: Option<u16>,
    pub parent: Option<NodeId>,
    /// Blocks have `[terminate, extend]`; a non-final extend branch has
    /// `[positive, negative]` blocks of the next level.
    pub children: Option<[NodeId; 2]>,
}

impl PhaseNode {
    pub fn is_leaf(&self) -> bool {
        self.terminal_multiplier.is_some()
    }
}

/// One level of a root-to-leaf path: the block entered and the feedback observed there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    pub kind: BlockKind,
    pub observed: Feedback,
}

#[derive(Debug, Clone)]
pub struct PhaseTree {
    num_relays: usize,
    nodes: Vec<PhaseNode>,
    roots: [NodeId; 2],
}

impl PhaseTree {
    pub fn num_relays(&self) -> usize {
        self.num_relays
    }

    pub fn nodes(&self) -> &[PhaseNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &PhaseNode {
        &self.nodes[id as usize]
    }

    /// Level-1 positive and negative blocks.
    pub fn roots(&self) -> [NodeId; 2] {
        self.roots
    }

    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &PhaseNode)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, n)| (i as NodeId, n))
    }

    /// Blocks and observed feedback from level 1 down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<Step> {
        let mut steps = Vec::new();
        let mut cursor = Some(id);
        while let Some(current) = cursor {
            let node = self.node(current);
            if let NodeRole::Branch(observed) = node.role {
                steps.push(Step {
                    kind: node.kind,
                    observed,
                });
            }
            cursor = node.parent;
        }
        steps.reverse();
        steps
    }

    pub fn leaf_probability_sum(&self) -> f64 {
        compensated_sum(self.leaves().map(|(_, n)| n.path_probability))
    }
}

/// Neumaier summation; trees for large `K` add millions of tiny terms.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Materializes every path of the construction for `num_relays` levels.
pub fn build_phase_tree(
    profile: &DecodeProfile,
    p: BscParam,
    num_relays: usize,
) -> Result<PhaseTree> {
    check_relays(num_relays, MAX_TREE_RELAYS)?;
    profile.require(num_relays)?;
    let p = p.value();
    let final_multiplier = (num_relays + 1) as u16;
    let mut nodes: Vec<PhaseNode> = Vec::with_capacity(6 << num_relays);

    fn push(nodes: &mut Vec<PhaseNode>, node: PhaseNode) -> NodeId {
        nodes.push(node);
        (nodes.len() - 1) as NodeId
    }

    fn push_blocks(
        nodes: &mut Vec<PhaseNode>,
        level: u16,
        reach: f64,
        q: f64,
        parent: Option<NodeId>,
    ) -> [NodeId; 2] {
        let block = |kind, prob| PhaseNode {
            kind,
            role: NodeRole::Block,
            level,
            path_probability: reach * prob,
            terminal_multiplier: None,
            parent,
            children: None,
        };
        let positive = push(nodes, block(BlockKind::Positive, q));
        let negative = push(nodes, block(BlockKind::Negative, 1.0 - q));
        [positive, negative]
    }

    let roots = push_blocks(&mut nodes, 1, 1.0, profile.levels[0], None);
    let mut pending = vec![roots[0], roots[1]];
    while let Some(block_id) = pending.pop() {
        let block = nodes[block_id as usize];
        let level = block.level;
        // probability of the terminating observation (ACK) for this block
        let stop = match block.kind {
            BlockKind::Positive => p,
            BlockKind::Negative => 1.0 - p,
        };
        let last = level as usize == num_relays;
        let terminate = push(
            &mut nodes,
            PhaseNode {
                kind: block.kind,
                role: NodeRole::Branch(Feedback::Ack),
                level,
                path_probability: block.path_probability * stop,
                terminal_multiplier: Some(level),
                parent: Some(block_id),
                children: None,
            },
        );
        let extend_probability = block.path_probability * (1.0 - stop);
        let extend = push(
            &mut nodes,
            PhaseNode {
                kind: block.kind,
                role: NodeRole::Branch(Feedback::Nack),
                level,
                path_probability: extend_probability,
                terminal_multiplier: last.then_some(final_multiplier),
                parent: Some(block_id),
                children: None,
            },
        );
        nodes[block_id as usize].children = Some([terminate, extend]);
        if !last {
            let next = push_blocks(
                &mut nodes,
                level + 1,
                extend_probability,
                profile.levels[level as usize],
                Some(extend),
            );
            nodes[extend as usize].children = Some(next);
            pending.extend(next);
        }
    }

    Ok(PhaseTree {
        num_relays,
        nodes,
        roots,
    })
}

/// `Σ path_probability × terminal_multiplier` over all leaves.
pub fn expected_phases_tree(tree: &PhaseTree) -> Result<f64> {
    let total = tree.leaf_probability_sum();
    if (total - 1.0).abs() > TREE_PROBABILITY_TOLERANCE {
        return Err(Error::InconsistentTree { total });
    }
    Ok(compensated_sum(tree.leaves().map(|(_, n)| {
        n.path_probability * f64::from(n.terminal_multiplier.unwrap_or_default())
    })))
}

/// Matrix form of `E(N)`.
///
/// With `S_l = [q_l, 1 - q_l]ᵀ` stacked as columns, `P·S` gives per level the
/// probability of observing ACK (row 0, stop) and NACK (row 1, continue). The
/// reach mass of each level is the running product of the NACK row; the
/// terminated mass is the Hadamard product of the stop row (with a final `1`
/// for the forced stop after the last relay) and the reach masses. The
/// phase-count vector `[1, ..., K + 1]` weights the result. For one relay this
/// is literally `[1, 2] · P · S`.
pub fn expected_phases_matrix(
    profile: &DecodeProfile,
    p: BscParam,
    num_relays: usize,
) -> Result<f64> {
    check_relays(num_relays, MAX_RELAYS)?;
    profile.require(num_relays)?;
    let feedback = p.matrix().to_matrix();
    let phase_counts = Matrix::row_vector((1..=num_relays + 1).map(|n| n as f64).collect());

    if num_relays == 1 {
        let q = profile.levels[0];
        let outcome = Matrix::column_vector(vec![q, 1.0 - q]);
        return Ok(phase_counts.matmul(&feedback)?.matmul(&outcome)?.get(0, 0));
    }

    let levels = &profile.levels[..num_relays];
    let outcomes =
        Matrix::from_rows(&[levels, &levels.iter().map(|q| 1.0 - q).collect::<Vec<_>>()])?;
    let split = feedback.matmul(&outcomes)?;

    let mut reach = Vec::with_capacity(num_relays + 1);
    let mut mass = 1.0;
    for &go in split.row(1) {
        reach.push(mass);
        mass *= go;
    }
    reach.push(mass);

    let mut stop = split.row(0).to_vec();
    stop.push(1.0);
    let terminated = hadamard(&Matrix::row_vector(stop), &Matrix::row_vector(reach))?;
    Ok(phase_counts.matmul(&terminated.transpose())?.get(0, 0))
}

/// `E(N)` by the level-mass recurrence. Zero relays means one direct phase.
pub fn expected_phases(profile: &DecodeProfile, p: BscParam, num_relays: usize) -> Result<f64> {
    if num_relays == 0 {
        return Ok(1.0);
    }
    check_relays(num_relays, MAX_RELAYS)?;
    profile.require(num_relays)?;
    let p = p.value();
    let mut reach = 1.0;
    let mut total = 0.0;
    for (level, &q) in profile.levels[..num_relays].iter().enumerate() {
        let stop = q * p + (1.0 - q) * (1.0 - p);
        let go = q * (1.0 - p) + (1.0 - q) * p;
        total += (level + 1) as f64 * reach * stop;
        reach *= go;
    }
    Ok(total + (num_relays + 1) as f64 * reach)
}
