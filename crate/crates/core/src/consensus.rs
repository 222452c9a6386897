//! Round-based voter consensus with limited unicast contacts.
//!
//! Each round a random legal set of contacts is drawn; every node adopts the
//! majority among itself and the peers it talked to, keeping its own opinion
//! on a tie. Contacts also gossip what each node knows about everyone's
//! opinion, which is how nodes learn that consensus has been reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{par_map, Parallelism};
use crate::rng::{mix64, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opinion {
    A,
    B,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContactGraph {
    #[default]
    Complete,
    Explicit {
        edges: Vec<(usize, usize)>,
    },
}

/// What node `i` knows about node `j`: its opinion as of a round.
type View = Option<(u32, Opinion)>;

#[derive(Clone, Debug, PartialEq)]
pub struct VoterNetwork {
    opinions: Vec<Opinion>,
    budget: usize,
    edges: Vec<(usize, usize)>,
    initiator: usize,
    stubborn: Vec<bool>,
    /// `views[i][j]`
    views: Vec<Vec<View>>,
    round: u32,
}

impl VoterNetwork {
    pub fn new(opinions: Vec<Opinion>, budget: usize, graph: &ContactGraph, initiator: usize) -> Result<Self> {
        let n = opinions.len();
        if n == 0 {
            return Err(Error::validation("n_nodes", "need at least one node"));
        }
        if initiator >= n {
            return Err(Error::validation("initiator", format!("node {initiator} does not exist")));
        }
        let edges = match graph {
            ContactGraph::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
            ContactGraph::Explicit { edges } => {
                let mut out: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
                for &(a, b) in edges {
                    if a >= n || b >= n || a == b {
                        return Err(Error::validation("edges", format!("invalid edge ({a}, {b})")));
                    }
                    out.push((a.min(b), a.max(b)));
                }
                out.sort_unstable();
                out.dedup();
                out
            }
        };
        let views = (0..n)
            .map(|i| (0..n).map(|j| (i == j).then_some((0, opinions[i]))).collect())
            .collect();
        Ok(Self { stubborn: vec![false; n], opinions, budget, edges, initiator, views, round: 0 })
    }

    /// Marks nodes that never change their opinion.
    pub fn with_stubborn(mut self, nodes: &[usize]) -> Result<Self> {
        for &s in nodes {
            *self.stubborn.get_mut(s).ok_or_else(|| Error::validation("stubborn", format!("node {s} does not exist")))? =
                true;
        }
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.opinions.len()
    }

    pub fn opinions(&self) -> &[Opinion] {
        &self.opinions
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn unanimous(&self) -> Option<Opinion> {
        let first = self.opinions[0];
        self.opinions.iter().all(|o| *o == first).then_some(first)
    }

    /// Random maximal contact set: edges in random order, each kept while
    /// both ends have budget left.
    pub fn draw_contacts(&self, rng: &mut RngStream) -> Vec<(usize, usize)> {
        let mut order = self.edges.clone();
        rng.shuffle(&mut order);
        let mut used = vec![0usize; self.n_nodes()];
        let mut contacts = Vec::new();
        for (a, b) in order {
            if used[a] < self.budget && used[b] < self.budget {
                used[a] += 1;
                used[b] += 1;
                contacts.push((a, b));
            }
        }
        contacts
    }

    /// Applies one round with the given contacts. Opinions and views are
    /// updated from the state before the round.
    pub fn apply_round(&mut self, contacts: &[(usize, usize)]) {
        let n = self.n_nodes();
        let before = self.opinions.clone();
        let views_before = self.views.clone();
        let mut peers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in contacts {
            peers[a].push(b);
            peers[b].push(a);
        }
        self.round += 1;
        for i in 0..n {
            if !self.stubborn[i] {
                let a = peers[i].iter().chain(std::iter::once(&i)).filter(|&&j| before[j] == Opinion::A).count();
                let b = peers[i].len() + 1 - a;
                self.opinions[i] = match a.cmp(&b) {
                    std::cmp::Ordering::Greater => Opinion::A,
                    std::cmp::Ordering::Less => Opinion::B,
                    std::cmp::Ordering::Equal => before[i],
                };
            }
            for &p in &peers[i] {
                for (mine, theirs) in self.views[i].iter_mut().zip(&views_before[p]) {
                    if let Some(v) = *theirs {
                        if mine.is_none_or(|m| m.0 < v.0) {
                            *mine = Some(v);
                        }
                    }
                }
            }
            self.views[i][i] = Some((self.round, self.opinions[i]));
        }
    }

    /// Draws contacts and applies the round.
    pub fn step_round(&mut self, rng: &mut RngStream) -> Vec<(usize, usize)> {
        let contacts = self.draw_contacts(rng);
        self.apply_round(&contacts);
        contacts
    }

    /// Whether node `i` knows that every node held `opinion` at some round
    /// no earlier than `since`.
    pub fn knows_consensus(&self, i: usize, opinion: Opinion, since: u32) -> bool {
        self.views[i].iter().all(|v| matches!(v, Some((r, o)) if *o == opinion && *r >= since))
    }

    fn opinion_hash(&self) -> u64 {
        self.opinions
            .iter()
            .fold(mix64(self.opinions.len() as u64), |h, o| mix64(h ^ (*o == Opinion::B) as u64))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConsensusVerdict {
    /// First round at which all opinions agree.
    pub birdseye_round: Option<u32>,
    /// First round at which the initiator knows consensus holds.
    pub initiator_round: Option<u32>,
    /// First round at which every node knows consensus holds.
    pub full_round: Option<u32>,
    pub rounds_run: u32,
    pub opinion: Option<Opinion>,
}

impl ConsensusVerdict {
    /// Bird's-eye consensus precedes both informed notions whenever they are defined.
    pub fn is_ordered(&self) -> bool {
        match self.birdseye_round {
            None => self.initiator_round.is_none() && self.full_round.is_none(),
            Some(b) => self.initiator_round.is_none_or(|i| b <= i) && self.full_round.is_none_or(|f| b <= f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundTrace {
    pub round: u32,
    pub contacts: Vec<(usize, usize)>,
    pub opinion_hash: u64,
}

/// Runs rounds until every node knows the consensus or `max_rounds` pass.
pub fn run_consensus(net: &mut VoterNetwork, rng: &mut RngStream, max_rounds: u32) -> (ConsensusVerdict, Vec<RoundTrace>) {
    let mut verdict = ConsensusVerdict::default();
    let mut trace = vec![RoundTrace { round: net.round(), contacts: Vec::new(), opinion_hash: net.opinion_hash() }];
    let check = |net: &VoterNetwork, v: &mut ConsensusVerdict| {
        if v.birdseye_round.is_none() {
            if let Some(o) = net.unanimous() {
                v.birdseye_round = Some(net.round());
                v.opinion = Some(o);
            }
        }
        if let (Some(b), Some(o)) = (v.birdseye_round, v.opinion) {
            if v.initiator_round.is_none() && net.knows_consensus(net.initiator, o, b) {
                v.initiator_round = Some(net.round());
            }
            if v.full_round.is_none() && (0..net.n_nodes()).all(|i| net.knows_consensus(i, o, b)) {
                v.full_round = Some(net.round());
            }
        }
    };
    check(net, &mut verdict);
    while verdict.full_round.is_none() && net.round() < max_rounds {
        let contacts = net.step_round(rng);
        trace.push(RoundTrace { round: net.round(), contacts, opinion_hash: net.opinion_hash() });
        check(net, &mut verdict);
    }
    verdict.rounds_run = net.round();
    (verdict, trace)
}

/// How initial opinions are assigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialOpinions {
    Explicit { opinions: Vec<Opinion> },
    /// `count_a` nodes hold A, placed uniformly at random per run.
    RandomSplit { count_a: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    pub n_nodes: usize,
    pub contact_budget: usize,
    #[serde(default)]
    pub graph: ContactGraph,
    pub initial: InitialOpinions,
    #[serde(default)]
    pub initiator: usize,
    #[serde(default)]
    pub stubborn: Vec<usize>,
    pub max_rounds: u32,
}

const STREAM_CONTACTS: u64 = 51;
const STREAM_INITIAL: u64 = 52;

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::validation("max_rounds", "must be positive"));
        }
        match &self.initial {
            InitialOpinions::Explicit { opinions } if opinions.len() != self.n_nodes => {
                Err(Error::validation("initial.opinions", "length must equal n_nodes"))
            }
            InitialOpinions::RandomSplit { count_a } if *count_a > self.n_nodes => {
                Err(Error::validation("initial.count_a", "cannot exceed n_nodes"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, seed: u64) -> Result<VoterNetwork> {
        self.validate()?;
        let opinions = match &self.initial {
            InitialOpinions::Explicit { opinions } => opinions.clone(),
            InitialOpinions::RandomSplit { count_a } => {
                let mut v: Vec<Opinion> =
                    (0..self.n_nodes).map(|i| if i < *count_a { Opinion::A } else { Opinion::B }).collect();
                RngStream::new(seed, STREAM_INITIAL).shuffle(&mut v);
                v
            }
        };
        VoterNetwork::new(opinions, self.contact_budget, &self.graph, self.initiator)?.with_stubborn(&self.stubborn)
    }

    pub fn run(&self, seed: u64) -> Result<(ConsensusVerdict, Vec<RoundTrace>)> {
        let mut net = self.build(seed)?;
        let mut rng = RngStream::new(seed, STREAM_CONTACTS);
        Ok(run_consensus(&mut net, &mut rng, self.max_rounds))
    }
}

/// One verdict per seed, in seed order.
pub fn run_many(cfg: &ConsensusConfig, seeds: &[u64], mode: Parallelism) -> Result<Vec<ConsensusVerdict>> {
    cfg.validate()?;
    par_map(seeds, mode, |&s| cfg.run(s).map(|(v, _)| v)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Opinion::{A, B};

    #[test]
    fn unanimous_is_fixed_point() {
        let mut net = VoterNetwork::new(vec![A; 5], 2, &ContactGraph::Complete, 0).unwrap();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..10 {
            net.step_round(&mut rng);
            assert_eq!(net.unanimous(), Some(A));
        }
    }

    #[test]
    fn minority_flips() {
        // node 5 holds B and talks to two A nodes
        let mut net = VoterNetwork::new(vec![A, A, B, B, A, B], 2, &ContactGraph::Complete, 0).unwrap();
        net.apply_round(&[(5, 0), (5, 1)]);
        assert_eq!(net.opinions()[5], A);
    }

    #[test]
    fn tie_keeps_own() {
        let mut net = VoterNetwork::new(vec![A, B], 1, &ContactGraph::Complete, 0).unwrap();
        net.apply_round(&[(0, 1)]);
        assert_eq!(net.opinions(), &[A, B]);
    }

    #[test]
    fn unanimous_start_is_round_zero() {
        let cfg = ConsensusConfig {
            n_nodes: 6,
            contact_budget: 2,
            graph: ContactGraph::Complete,
            initial: InitialOpinions::Explicit { opinions: vec![B; 6] },
            initiator: 0,
            stubborn: vec![],
            max_rounds: 50,
        };
        let (v, _) = cfg.run(3).unwrap();
        assert_eq!(v.birdseye_round, Some(0));
        assert!(v.is_ordered());
    }

    #[test]
    fn two_agreeing_nodes_informed_after_one_exchange() {
        let mut net = VoterNetwork::new(vec![A, A], 1, &ContactGraph::Complete, 0).unwrap();
        let mut rng = RngStream::new(0, 0);
        let (v, trace) = run_consensus(&mut net, &mut rng, 10);
        assert_eq!(v.birdseye_round, Some(0));
        assert_eq!(v.initiator_round, Some(1));
        assert_eq!(v.full_round, Some(1));
        assert_eq!(trace.len(), 2);
    }

    #[test]
    fn contacts_are_legal() {
        let graph = ContactGraph::Explicit { edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)] };
        let net = VoterNetwork::new(vec![A, B, A, B], 2, &graph, 0).unwrap();
        let mut rng = RngStream::new(9, 0);
        for _ in 0..200 {
            let contacts = net.draw_contacts(&mut rng);
            let mut deg = [0usize; 4];
            for &(a, b) in &contacts {
                assert!(net.edges().contains(&(a.min(b), a.max(b))));
                deg[a] += 1;
                deg[b] += 1;
            }
            assert!(deg.iter().all(|d| *d <= 2));
        }
    }

    #[test]
    fn stubborn_nodes_block_consensus() {
        let cfg = ConsensusConfig {
            n_nodes: 4,
            contact_budget: 2,
            graph: ContactGraph::Complete,
            initial: InitialOpinions::Explicit { opinions: vec![A, A, B, B] },
            initiator: 0,
            stubborn: vec![0, 3],
            max_rounds: 30,
        };
        let (v, _) = cfg.run(1).unwrap();
        assert_eq!(v.birdseye_round, None);
        assert_eq!(v.rounds_run, 30);
    }

    #[test]
    fn knowledge_only_advances() {
        let cfg = ConsensusConfig {
            n_nodes: 6,
            contact_budget: 2,
            graph: ContactGraph::Complete,
            initial: InitialOpinions::RandomSplit { count_a: 3 },
            initiator: 0,
            stubborn: vec![],
            max_rounds: 40,
        };
        let mut net = cfg.build(4).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..40 {
            let before = net.views.clone();
            net.step_round(&mut rng);
            for (row_b, row_a) in before.iter().zip(&net.views) {
                for (b, a) in row_b.iter().zip(row_a) {
                    if let Some((rb, _)) = b {
                        assert!(a.is_some_and(|(ra, _)| ra >= *rb));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(VoterNetwork::new(vec![], 2, &ContactGraph::Complete, 0).is_err());
        assert!(VoterNetwork::new(vec![A], 2, &ContactGraph::Complete, 3).is_err());
        let bad = ContactGraph::Explicit { edges: vec![(0, 0)] };
        assert!(VoterNetwork::new(vec![A, B], 2, &bad, 0).is_err());
    }
}
