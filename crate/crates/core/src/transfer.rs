//! The partition-tree policy with known smoothness and transfer parameters.
//!
//! The cube starts as a single leaf running successive elimination. Once
//! every surviving arm of a leaf has used up its live-pull budget the leaf is
//! split into its `2^d` children, which inherit the surviving arms and are
//! seeded from the logged data falling inside them. Leaves at the maximum
//! depth never split and exploit their best arm.

use rand::RngCore;

use crate::elimination::{c_star, max_depth, AuxIndex, BinBanditState, BoundParams, ConfidenceBound};
use crate::environment::{Arm, AuxDataset};
use crate::error::{domain, logic, Result};
use crate::geometry::{check_point, BinId};
use crate::policy::Policy;

#[derive(Clone, Debug)]
struct Node {
    bin: BinId,
    /// Present on leaves only.
    state: Option<BinBanditState>,
    /// Index of the first child; children are stored contiguously.
    first_child: Option<usize>,
    /// Arms handed to the children when the node was split.
    inherited: Vec<Arm>,
    visits: u64,
}

#[derive(Clone, Debug)]
struct Pending {
    node: usize,
    arm: Arm,
    x: Vec<f64>,
}

/// A lazily grown dyadic tree whose leaves run [`BinBanditState`] under a
/// confidence-width model `B`.
#[derive(Clone, Debug)]
pub struct PartitionTree<B> {
    bound: B,
    aux: AuxIndex,
    num_arms: usize,
    dim: usize,
    max_level: u32,
    nodes: Vec<Node>,
    pending: Option<Pending>,
    t: u64,
}

impl<B: ConfidenceBound> PartitionTree<B> {
    pub fn new(bound: B, aux: AuxIndex, num_arms: usize, dim: usize, max_level: u32) -> Result<Self> {
        if num_arms == 0 {
            return Err(domain("at least one arm is required"));
        }
        let arms: Vec<Arm> = (0..num_arms).map(Arm::from_index).collect();
        let root = BinId::root(dim);
        let state = BinBanditState::init(root.clone(), &arms, num_arms, &aux, &bound)?;
        Ok(Self {
            bound,
            aux,
            num_arms,
            dim,
            max_level,
            nodes: vec![Node { bin: root, state: Some(state), first_child: None, inherited: Vec::new(), visits: 0 }],
            pending: None,
            t: 0,
        })
    }

    pub fn bound(&self) -> &B {
        &self.bound
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Completed select/observe rounds.
    pub fn steps(&self) -> u64 {
        self.t
    }

    fn locate(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(first) = self.nodes[i].first_child {
            i = first + self.nodes[i].bin.child_offset(x);
        }
        i
    }

    fn wants_split(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        let st = n.state.as_ref().expect("leaf");
        st.active.len() > 1 && n.bin.level() < self.max_level && st.all_at_limit()
    }

    fn split(&mut self, node: usize) -> Result<()> {
        let mut state = self.nodes[node].state.take().expect("leaf");
        if state.active.iter().all(|a| state.limits[a.index()] == 0) {
            state.prune_with_aux(&self.bound);
        }
        let first = self.nodes.len();
        for child in self.nodes[node].bin.children() {
            let st = BinBanditState::init(child.clone(), &state.active, self.num_arms, &self.aux, &self.bound)?;
            self.nodes.push(Node { bin: child, state: Some(st), first_child: None, inherited: Vec::new(), visits: 0 });
        }
        self.nodes[node].first_child = Some(first);
        self.nodes[node].inherited = state.active;
        Ok(())
    }

    pub fn select(&mut self, x: &[f64]) -> Result<Arm> {
        if x.len() != self.dim {
            return Err(domain(format!("expected a {}-dimensional context", self.dim)));
        }
        check_point(x)?;
        let mut node = self.locate(x);
        while self.wants_split(node) {
            self.split(node)?;
            node = self.locate(x);
        }
        let arm = self.nodes[node].state.as_mut().expect("leaf").select(&self.bound);
        self.pending = Some(Pending { node, arm, x: x.to_vec() });
        Ok(arm)
    }

    pub fn observe(&mut self, x: &[f64], arm: Arm, reward: f64) -> Result<()> {
        let Some(p) = self.pending.take() else {
            return Err(logic("observe called without a preceding select"));
        };
        if p.arm != arm || p.x != x {
            let err = logic(format!("observe({arm}) does not match the last select({})", p.arm));
            self.pending = Some(p);
            return Err(err);
        }
        let n = &mut self.nodes[p.node];
        n.state.as_mut().expect("leaf").observe(&self.bound, arm, reward)?;
        n.visits += 1;
        self.t += 1;
        Ok(())
    }

    /// The current leaves with their states, in arena order.
    pub fn leaves(&self) -> impl Iterator<Item = (&BinId, &BinBanditState)> {
        self.nodes.iter().filter_map(|n| n.state.as_ref().map(|s| (&n.bin, s)))
    }

    /// Rounds observed while each node was a leaf.
    pub fn visit_counts(&self) -> Vec<(&BinId, u64)> {
        self.nodes.iter().map(|n| (&n.bin, n.visits)).collect()
    }

    /// The leaf containing `x`.
    pub fn leaf_of(&self, x: &[f64]) -> (&BinId, &BinBanditState) {
        let n = &self.nodes[self.locate(x)];
        (&n.bin, n.state.as_ref().expect("leaf"))
    }

    /// Arm sets from the root down to the leaf containing `x`: the arms each
    /// split node passed on, then the leaf's active arms.
    pub fn path_arms(&self, x: &[f64]) -> Vec<Vec<Arm>> {
        let mut out = Vec::new();
        let mut i = 0;
        while let Some(first) = self.nodes[i].first_child {
            out.push(self.nodes[i].inherited.clone());
            i = first + self.nodes[i].bin.child_offset(x);
        }
        out.push(self.nodes[i].state.as_ref().expect("leaf").active.clone());
        out
    }
}

/// Parameters of the known-smoothness transfer policy.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferParams {
    pub bounds: BoundParams,
    pub c_gamma: f64,
    pub q_lo: f64,
    pub num_arms: usize,
}

impl TransferParams {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.c_gamma > 0.0 && self.c_gamma <= 1.0) {
            return Err(domain(format!("c_gamma = {} outside (0, 1]", self.c_gamma)));
        }
        if !(self.q_lo > 0.0) {
            return Err(domain(format!("q_lo = {} must be positive", self.q_lo)));
        }
        if self.num_arms == 0 {
            return Err(domain("at least one arm is required"));
        }
        Ok(())
    }

    pub fn c_star(&self) -> Result<f64> {
        c_star(self.bounds.c_beta, self.c_gamma, self.q_lo, self.num_arms)
    }

    pub fn max_depth(&self) -> Result<u32> {
        let b = &self.bounds;
        max_depth(b.n_q, b.n_p, b.kappa, b.gamma, b.beta, b.dim, self.c_star()?)
    }
}

/// Transfer policy with known smoothness and transfer exponents.
#[derive(Clone, Debug)]
pub struct TransferPolicy {
    params: TransferParams,
    c_star: f64,
    tree: PartitionTree<BoundParams>,
}

impl TransferPolicy {
    pub fn new(params: TransferParams, aux: &AuxDataset) -> Result<Self> {
        params.validate()?;
        if aux.len() as u64 != params.bounds.n_p {
            return Err(domain(format!(
                "n_P = {} but the logged dataset has {} samples",
                params.bounds.n_p,
                aux.len()
            )));
        }
        aux.validate(params.bounds.dim, params.num_arms)?;
        let c_star = params.c_star()?;
        let depth = params.max_depth()?;
        let tree = PartitionTree::new(params.bounds.clone(), AuxIndex::new(aux), params.num_arms, params.bounds.dim, depth)?;
        Ok(Self { params, c_star, tree })
    }

    pub fn params(&self) -> &TransferParams {
        &self.params
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn max_depth(&self) -> u32 {
        self.tree.max_level()
    }

    pub fn tree(&self) -> &PartitionTree<BoundParams> {
        &self.tree
    }
}

impl Policy for TransferPolicy {
    fn select(&mut self, x: &[f64], _rng: &mut dyn RngCore) -> Result<Arm> {
        self.tree.select(x)
    }

    fn observe(&mut self, x: &[f64], arm: Arm, reward: f64) -> Result<()> {
        self.tree.observe(x, arm, reward)
    }
}

pub fn tl_init(params: TransferParams, aux: &AuxDataset) -> Result<TransferPolicy> {
    TransferPolicy::new(params, aux)
}

pub fn tl_select(policy: &mut TransferPolicy, x: &[f64]) -> Result<Arm> {
    policy.tree.select(x)
}

pub fn tl_observe(policy: &mut TransferPolicy, x: &[f64], arm: Arm, reward: f64) -> Result<()> {
    policy.tree.observe(x, arm, reward)
}
