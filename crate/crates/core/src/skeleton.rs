//! The fixed nine-joint upper-body graph.
//!
//! Joints are the torso and both arms; head, knees and ankles are never
//! part of the graph. Hips hang off the neck so the graph stays a tree and
//! any joint of one arm is at least three hops from any joint of the other.

use std::collections::VecDeque;
use std::fmt;

pub const NUM_JOINTS: usize = 9;

/// Index of a joint in the canonical upper-body order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointId(usize);

impl JointId {
    pub const NECK: JointId = JointId(0);
    pub const R_SHOULDER: JointId = JointId(1);
    pub const R_ELBOW: JointId = JointId(2);
    pub const R_WRIST: JointId = JointId(3);
    pub const L_SHOULDER: JointId = JointId(4);
    pub const L_ELBOW: JointId = JointId(5);
    pub const L_WRIST: JointId = JointId(6);
    pub const R_HIP: JointId = JointId(7);
    pub const L_HIP: JointId = JointId(8);

    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId(0),
        JointId(1),
        JointId(2),
        JointId(3),
        JointId(4),
        JointId(5),
        JointId(6),
        JointId(7),
        JointId(8),
    ];

    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_JOINTS).then_some(JointId(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn name(self) -> &'static str {
        JOINT_NAMES[self.0]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        JOINT_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(JointId)
    }

    pub fn is_wrist(self) -> bool {
        self == Self::R_WRIST || self == Self::L_WRIST
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "Neck",
    "RShoulder",
    "RElbow",
    "RWrist",
    "LShoulder",
    "LElbow",
    "LWrist",
    "RHip",
    "LHip",
];

pub const EDGES: [(usize, usize); 8] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (5, 6),
    (0, 7),
    (0, 8),
];

/// Which range a source joint falls into relative to a target joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopRange {
    SelfNode,
    Short,
    Long,
}

impl HopRange {
    pub fn of_hop(hop: usize) -> Self {
        match hop {
            0 => HopRange::SelfNode,
            1 | 2 => HopRange::Short,
            _ => HopRange::Long,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopPartition {
    pub target: JointId,
    pub self_node: JointId,
    /// Ordered by ascending hop, then ascending joint index.
    pub short: Vec<JointId>,
    /// Ordered by ascending hop, then ascending joint index.
    pub long: Vec<JointId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    pub edges: Vec<(JointId, JointId)>,
    /// D^-1/2 (A + I) D^-1/2, row-major.
    pub adjacency_hat: [[f64; NUM_JOINTS]; NUM_JOINTS],
    pub hop: [[usize; NUM_JOINTS]; NUM_JOINTS],
}

impl SkeletonGraph {
    pub fn hop(&self, a: JointId, b: JointId) -> usize {
        self.hop[a.0][b.0]
    }

    pub fn max_hop(&self) -> usize {
        self.hop.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Joints with a nonzero entry in the normalized adjacency row, self included.
    pub fn neighbors(&self, target: JointId) -> Vec<JointId> {
        JointId::ALL
            .into_iter()
            .filter(|j| self.adjacency_hat[target.0][j.0] != 0.0)
            .collect()
    }

    pub fn hop_partition(&self, target: JointId) -> HopPartition {
        let mut others: Vec<JointId> = JointId::ALL
            .into_iter()
            .filter(|&j| j != target)
            .collect();
        others.sort_by_key(|&j| (self.hop(target, j), j.0));
        let (short, long): (Vec<_>, Vec<_>) = others
            .into_iter()
            .partition(|&j| HopRange::of_hop(self.hop(target, j)) == HopRange::Short);
        HopPartition {
            target,
            self_node: target,
            short,
            long,
        }
    }

    pub fn hop_csv(&self) -> String {
        let mut out = String::from("joint");
        for name in JOINT_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.hop.iter().enumerate() {
            out.push_str(JOINT_NAMES[i]);
            for h in row {
                out.push_str(&format!(",{h}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_skeleton() -> SkeletonGraph {
    let mut adj = [[0.0f64; NUM_JOINTS]; NUM_JOINTS];
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); NUM_JOINTS];
    for &(a, b) in &EDGES {
        adj[a][b] = 1.0;
        adj[b][a] = 1.0;
        lists[a].push(b);
        lists[b].push(a);
    }
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let degree: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let mut adjacency_hat = [[0.0f64; NUM_JOINTS]; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        for j in 0..NUM_JOINTS {
            if adj[i][j] != 0.0 {
                adjacency_hat[i][j] = adj[i][j] / (degree[i] * degree[j]).sqrt();
            }
        }
    }

    let mut hop = [[usize::MAX; NUM_JOINTS]; NUM_JOINTS];
    for (src, row) in hop.iter_mut().enumerate() {
        row[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &lists[u] {
                if row[v] == usize::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    SkeletonGraph {
        edges: EDGES
            .iter()
            .map(|&(a, b)| (JointId(a), JointId(b)))
            .collect(),
        adjacency_hat,
        hop,
    }
}
