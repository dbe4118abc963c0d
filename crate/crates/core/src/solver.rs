//! Online Monte Carlo tree search over belief states.
//!
//! Action selection is UCB1; belief branching is tamed by progressive
//! widening (continuous observations would otherwise spawn one child per
//! simulation). Belief children are keyed by the observation that created
//! them, so discrete observation spaces collapse to exact expectimax.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error raised by a belief transition inside the search.
#[derive(Debug)]
pub struct StepFailure(pub Box<dyn std::error::Error + Send + Sync>);

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for StepFailure {}

/// A generative belief-MDP: everything the search needs from a problem.
pub trait BeliefMdp {
    type Belief: Clone;
    /// Hashable identity of a sampled observation, used to key belief
    /// children. Identical keys are treated as the same child.
    type ObsKey: Hash + Eq + Clone;

    fn num_actions(&self) -> usize;
    fn discount(&self) -> f64;
    fn step(
        &self,
        belief: &Self::Belief,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(Self::Belief, Self::ObsKey, f64), StepFailure>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iterations: usize,
    /// Planning horizon in belief-node depth.
    pub max_depth: usize,
    pub exploration_constant: f64,
    /// Widening factor k_o: an action node may hold at most
    /// k_o * N(b,a)^alpha_o belief children.
    pub widening_factor: f64,
    pub widening_exponent: f64,
    pub rollout_depth: usize,
    /// Folded into the planner stream derivation by the harness.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            max_depth: 15,
            exploration_constant: 10.0,
            widening_factor: 4.0,
            widening_exponent: 0.1,
            rollout_depth: 10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_depth == 0 {
            return Err(SolverError::InvalidConfig("max_depth must be > 0".into()));
        }
        if !(self.exploration_constant > 0.0) {
            return Err(SolverError::InvalidConfig(
                "exploration_constant must be > 0".into(),
            ));
        }
        if !(self.widening_factor > 0.0) {
            return Err(SolverError::InvalidConfig(
                "widening_factor must be > 0".into(),
            ));
        }
        if !(self.widening_exponent > 0.0 && self.widening_exponent < 1.0) {
            return Err(SolverError::InvalidConfig(
                "widening_exponent must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("plan requires at least one iteration")]
    ZeroIterations,
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("belief transition failed at depth {depth}: {failure}")]
    Step { depth: usize, failure: StepFailure },
}

pub struct BeliefNode<B> {
    pub belief: B,
    pub visits: u64,
    /// Action-node ids, one per action, index = action.
    pub actions: Vec<usize>,
}

pub struct ActionNode<K> {
    pub visits: u64,
    pub q: f64,
    /// (observation key, belief node id, edge reward), insertion order.
    pub children: Vec<(K, usize, f64)>,
    index: HashMap<K, usize>,
}

pub struct SearchTree<B, K> {
    pub belief_nodes: Vec<BeliefNode<B>>,
    pub action_nodes: Vec<ActionNode<K>>,
}

impl<B, K: Hash + Eq + Clone> SearchTree<B, K> {
    fn new(root: B, num_actions: usize) -> Self {
        let mut tree = Self {
            belief_nodes: Vec::new(),
            action_nodes: Vec::new(),
        };
        tree.push_belief(root, num_actions);
        tree
    }

    fn push_belief(&mut self, belief: B, num_actions: usize) -> usize {
        let actions = (0..num_actions)
            .map(|_| {
                self.action_nodes.push(ActionNode {
                    visits: 0,
                    q: 0.0,
                    children: Vec::new(),
                    index: HashMap::new(),
                });
                self.action_nodes.len() - 1
            })
            .collect();
        self.belief_nodes.push(BeliefNode {
            belief,
            visits: 0,
            actions,
        });
        self.belief_nodes.len() - 1
    }

    pub fn root_q(&self) -> Vec<(u64, f64)> {
        self.belief_nodes[0]
            .actions
            .iter()
            .map(|&a| (self.action_nodes[a].visits, self.action_nodes[a].q))
            .collect()
    }

    /// Every belief node's visit count must equal the sum over its action
    /// children.
    fn counts_consistent(&self, node: usize) -> bool {
        let bn = &self.belief_nodes[node];
        bn.visits == bn.actions.iter().map(|&a| self.action_nodes[a].visits).sum::<u64>()
    }

    fn counts_consistent_everywhere(&self) -> bool {
        (0..self.belief_nodes.len()).all(|i| self.counts_consistent(i))
    }
}

/// Runs `iterations` simulations from `belief` and returns the root action
/// with the highest Q estimate (ties to the lowest index).
pub fn plan<M: BeliefMdp>(
    problem: &M,
    belief: &M::Belief,
    config: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<usize, SolverError> {
    plan_with_tree(problem, belief, config, rng).map(|(action, _)| action)
}

/// Same as `plan` but hands back the finished tree for inspection.
pub fn plan_with_tree<M: BeliefMdp>(
    problem: &M,
    belief: &M::Belief,
    config: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<(usize, SearchTree<M::Belief, M::ObsKey>), SolverError> {
    if config.iterations == 0 {
        return Err(SolverError::ZeroIterations);
    }
    config.validate()?;
    let mut tree = SearchTree::new(belief.clone(), problem.num_actions());
    for _ in 0..config.iterations {
        simulate(&mut tree, 0, 0, problem, config, rng)?;
        debug_assert!(tree.counts_consistent(0), "root visit counts diverged");
    }
    debug_assert!(
        tree.counts_consistent_everywhere(),
        "tree visit counts diverged"
    );
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for (a, &an) in tree.belief_nodes[0].actions.iter().enumerate() {
        let node = &tree.action_nodes[an];
        if node.visits > 0 && node.q > best_q {
            best = a;
            best_q = node.q;
        }
    }
    Ok((best, tree))
}

/// One recursive simulation: UCB1 action choice, progressive widening on
/// the belief child, recursion, running-average backup of
/// r + discount * child return.
pub fn simulate<M: BeliefMdp>(
    tree: &mut SearchTree<M::Belief, M::ObsKey>,
    node: usize,
    depth: usize,
    problem: &M,
    config: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<f64, SolverError> {
    if depth >= config.max_depth {
        return Ok(0.0);
    }
    let action = select_ucb(tree, node, config);
    let action_node = tree.belief_nodes[node].actions[action];
    let gamma = problem.discount();

    let visits = tree.action_nodes[action_node].visits;
    let child_count = tree.action_nodes[action_node].children.len();
    let allowed = config.widening_factor * (visits as f64).powf(config.widening_exponent);

    let value = if (child_count as f64) < allowed || child_count == 0 {
        let belief = tree.belief_nodes[node].belief.clone();
        let (next, key, reward) = problem
            .step(&belief, action, rng)
            .map_err(|failure| SolverError::Step { depth, failure })?;
        match tree.action_nodes[action_node].index.get(&key).copied() {
            Some(pos) => {
                // Same observation as an existing child: treat as a revisit
                // of that child so discrete observation spaces stay exact.
                let (_, child, edge_reward) = tree.action_nodes[action_node].children[pos].clone();
                edge_reward + gamma * simulate(tree, child, depth + 1, problem, config, rng)?
            }
            None => {
                let child = tree.push_belief(next.clone(), problem.num_actions());
                let an = &mut tree.action_nodes[action_node];
                an.index.insert(key.clone(), an.children.len());
                an.children.push((key, child, reward));
                reward + gamma * rollout(problem, &next, depth + 1, config, rng)?
            }
        }
    } else {
        let pos = rng.random_range(0..child_count);
        let (_, child, edge_reward) = tree.action_nodes[action_node].children[pos].clone();
        edge_reward + gamma * simulate(tree, child, depth + 1, problem, config, rng)?
    };

    let an = &mut tree.action_nodes[action_node];
    an.visits += 1;
    an.q += (value - an.q) / an.visits as f64;
    tree.belief_nodes[node].visits += 1;
    Ok(value)
}

/// Discounted return of a uniform-random playout of `rollout_depth` steps
/// (clipped to the remaining horizon).
pub fn rollout<M: BeliefMdp>(
    problem: &M,
    belief: &M::Belief,
    depth: usize,
    config: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<f64, SolverError> {
    let steps = config
        .rollout_depth
        .min(config.max_depth.saturating_sub(depth));
    let gamma = problem.discount();
    let mut current = belief.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for k in 0..steps {
        let action = rng.random_range(0..problem.num_actions());
        let (next, _, reward) = problem
            .step(&current, action, rng)
            .map_err(|failure| SolverError::Step {
                depth: depth + k,
                failure,
            })?;
        total += discount * reward;
        discount *= gamma;
        current = next;
    }
    Ok(total)
}

fn select_ucb<B, K>(tree: &SearchTree<B, K>, node: usize, config: &SolverConfig) -> usize {
    let bn = &tree.belief_nodes[node];
    let total = bn.visits.max(1) as f64;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, &an) in bn.actions.iter().enumerate() {
        let child = &tree.action_nodes[an];
        let score = if child.visits == 0 {
            f64::INFINITY
        } else {
            child.q
                + config.exploration_constant * (total.ln() / child.visits as f64).sqrt()
        };
        if score > best_score {
            best = a;
            best_score = score;
        }
    }
    best
}
