//! Spatial clustering and route sequencing of sampling tasks.
//!
//! Distances live on the normalized floor-plan coordinates: plain Euclidean
//! inside a zone, plus a constant penalty `W` when a leg crosses zones.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{PointId, Registry, SamplingPoint, SamplingTask, TaskId, ZoneId};

pub const DEFAULT_INTER_ZONE_PENALTY: f64 = 5.0;
/// Largest instance `optimal_route` will enumerate.
pub const OPTIMAL_ROUTE_LIMIT: usize = 9;
const MAX_KMEDOIDS_ROUNDS: usize = 100;
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequencerError {
    #[error("inter-zone penalty must be a finite non-negative number, got {0}")]
    InvalidPenalty(f64),
    #[error("unknown sampling point {0}")]
    UnknownPoint(PointId),
    #[error("k = {k} exceeds the {tasks} task(s)")]
    KTooLarge { k: usize, tasks: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("cluster has no tasks")]
    EmptyCluster,
    #[error("{0} tasks exceed the exhaustive-search limit of {OPTIMAL_ROUTE_LIMIT}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    inter_zone_penalty: f64,
}

impl Default for DistanceModel {
    fn default() -> Self {
        Self {
            inter_zone_penalty: DEFAULT_INTER_ZONE_PENALTY,
        }
    }
}

impl DistanceModel {
    pub fn new(inter_zone_penalty: f64) -> Result<Self, SequencerError> {
        if inter_zone_penalty.is_finite() && inter_zone_penalty >= 0.0 {
            Ok(Self { inter_zone_penalty })
        } else {
            Err(SequencerError::InvalidPenalty(inter_zone_penalty))
        }
    }

    pub fn inter_zone_penalty(&self) -> f64 {
        self.inter_zone_penalty
    }

    pub fn distance(&self, a: &SamplingPoint, b: &SamplingPoint) -> f64 {
        let d = a.coords.euclidean(&b.coords);
        if a.zone_id == b.zone_id {
            d
        } else {
            self.inter_zone_penalty + d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster index per task, in input order.
    pub assignment: IndexMap<TaskId, usize>,
    pub k: usize,
    /// Zone of each cluster when clustering by zone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zones: Vec<ZoneId>,
    /// Medoid task of each cluster when clustering with k-medoids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub medoids: Vec<TaskId>,
}

impl ClusterAssignment {
    /// Task ids grouped by cluster index.
    pub fn clusters(&self) -> Vec<Vec<TaskId>> {
        let mut out = vec![Vec::new(); self.k];
        for (task, &c) in &self.assignment {
            out[c].push(task.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStop {
    pub task_id: TaskId,
    pub point_id: PointId,
    /// Distance from the previous stop (or the start point).
    pub leg_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub start_point: PointId,
    pub stops: Vec<RouteStop>,
    pub total_cost: f64,
}

impl RoutePlan {
    pub fn task_ids(&self) -> Vec<TaskId> {
        self.stops.iter().map(|s| s.task_id.clone()).collect()
    }
}

fn resolve<'a>(registry: &'a Registry, point: &PointId) -> Result<&'a SamplingPoint, SequencerError> {
    registry
        .point(point.as_str())
        .ok_or_else(|| SequencerError::UnknownPoint(point.clone()))
}

/// Resolved task positions plus a symmetric distance matrix. Index `n` is the
/// start point when one is given.
struct Instance<'a> {
    tasks: Vec<&'a SamplingTask>,
    dist: Vec<Vec<f64>>,
}

impl<'a> Instance<'a> {
    fn build(
        tasks: &'a [SamplingTask],
        start: Option<&PointId>,
        registry: &Registry,
        model: &DistanceModel,
    ) -> Result<Self, SequencerError> {
        let mut points = tasks
            .iter()
            .map(|t| resolve(registry, &t.point_id))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(start) = start {
            points.push(resolve(registry, start)?);
        }
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| model.distance(a, b)).collect())
            .collect();
        Ok(Self {
            tasks: tasks.iter().collect(),
            dist,
        })
    }

    fn tie_key(&self, i: usize) -> (&str, &str, &str) {
        let t = self.tasks[i];
        (t.point_id.as_str(), t.method_id.as_str(), t.task_id.as_str())
    }

    /// Cost of visiting `order` from the start point, summed left to right.
    fn path_cost(&self, order: &[usize]) -> f64 {
        let start = self.tasks.len();
        let mut prev = start;
        let mut total = 0.0;
        for &i in order {
            total += self.dist[prev][i];
            prev = i;
        }
        total
    }

    fn plan(&self, start: &PointId, order: &[usize]) -> RoutePlan {
        let mut prev = self.tasks.len();
        let mut total = 0.0;
        let stops = order
            .iter()
            .map(|&i| {
                let leg = self.dist[prev][i];
                total += leg;
                prev = i;
                RouteStop {
                    task_id: self.tasks[i].task_id.clone(),
                    point_id: self.tasks[i].point_id.clone(),
                    leg_cost: leg,
                }
            })
            .collect();
        RoutePlan {
            start_point: start.clone(),
            stops,
            total_cost: total,
        }
    }
}

/// Groups tasks by zone (`k = None`) or by k-medoids on the distance model.
pub fn cluster_tasks(
    tasks: &[SamplingTask],
    registry: &Registry,
    k: Option<usize>,
    model: &DistanceModel,
) -> Result<ClusterAssignment, SequencerError> {
    let inst = Instance::build(tasks, None, registry, model)?;
    match k {
        None => {
            let zones: Vec<ZoneId> = tasks
                .iter()
                .map(|t| registry.point(t.point_id.as_str()).expect("resolved").zone_id.clone())
                .collect();
            let index: BTreeMap<&ZoneId, usize> = {
                let mut distinct: Vec<&ZoneId> = zones.iter().collect();
                distinct.sort();
                distinct.dedup();
                distinct.into_iter().enumerate().map(|(i, z)| (z, i)).collect()
            };
            Ok(ClusterAssignment {
                assignment: tasks
                    .iter()
                    .zip(&zones)
                    .map(|(t, z)| (t.task_id.clone(), index[z]))
                    .collect(),
                k: index.len(),
                zones: index.keys().map(|z| (*z).clone()).collect(),
                medoids: Vec::new(),
            })
        }
        Some(0) => Err(SequencerError::ZeroClusters),
        Some(k) if k > tasks.len() => Err(SequencerError::KTooLarge {
            k,
            tasks: tasks.len(),
        }),
        Some(k) => {
            let medoids = k_medoids(&inst, k);
            let labels = assign(&inst.dist, &medoids);
            Ok(ClusterAssignment {
                assignment: tasks
                    .iter()
                    .zip(labels)
                    .map(|(t, c)| (t.task_id.clone(), c))
                    .collect(),
                k,
                zones: Vec::new(),
                medoids: medoids.iter().map(|&m| tasks[m].task_id.clone()).collect(),
            })
        }
    }
}

/// Nearest medoid per item; a medoid always keeps its own cluster, other
/// ties go to the lower cluster index.
fn assign(dist: &[Vec<f64>], medoids: &[usize]) -> Vec<usize> {
    (0..dist.len())
        .map(|i| {
            if let Some(c) = medoids.iter().position(|&m| m == i) {
                return c;
            }
            let mut best = 0;
            for c in 1..medoids.len() {
                if dist[i][medoids[c]] < dist[i][medoids[best]] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn assignment_cost(dist: &[Vec<f64>], medoids: &[usize]) -> f64 {
    assign(dist, medoids)
        .iter()
        .enumerate()
        .map(|(i, &c)| dist[i][medoids[c]])
        .sum()
}

/// PAM: start from the `k` tasks with the smallest point ids, then apply the
/// best improving medoid swap until none remains.
fn k_medoids(inst: &Instance<'_>, k: usize) -> Vec<usize> {
    let n = inst.tasks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| inst.tie_key(a).cmp(&inst.tie_key(b)));
    let mut medoids: Vec<usize> = order[..k].to_vec();
    let mut cost = assignment_cost(&inst.dist, &medoids);
    for _ in 0..MAX_KMEDOIDS_ROUNDS {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for &candidate in &order {
                if medoids.contains(&candidate) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = candidate;
                let c = assignment_cost(&inst.dist, &trial);
                if c < cost - IMPROVEMENT_EPS && best.is_none_or(|(b, _, _)| c < b) {
                    best = Some((c, slot, candidate));
                }
            }
        }
        match best {
            Some((c, slot, candidate)) => {
                medoids[slot] = candidate;
                cost = c;
            }
            None => break,
        }
    }
    medoids
}

/// Greedy nearest neighbour from `start`, then best-improvement 2-opt on the
/// open path.
pub fn sequence_route(
    tasks: &[SamplingTask],
    start: &PointId,
    registry: &Registry,
    model: &DistanceModel,
) -> Result<RoutePlan, SequencerError> {
    if tasks.is_empty() {
        return Err(SequencerError::EmptyCluster);
    }
    let inst = Instance::build(tasks, Some(start), registry, model)?;
    let order = two_opt(&inst, greedy_order(&inst));
    Ok(inst.plan(start, &order))
}

/// Greedy visiting order only; exposed for comparison against the full plan.
pub fn greedy_route(
    tasks: &[SamplingTask],
    start: &PointId,
    registry: &Registry,
    model: &DistanceModel,
) -> Result<RoutePlan, SequencerError> {
    if tasks.is_empty() {
        return Err(SequencerError::EmptyCluster);
    }
    let inst = Instance::build(tasks, Some(start), registry, model)?;
    Ok(inst.plan(start, &greedy_order(&inst)))
}

fn greedy_order(inst: &Instance<'_>) -> Vec<usize> {
    let n = inst.tasks.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = n;
    for _ in 0..n {
        let next = (0..n)
            .filter(|&i| !visited[i])
            .min_by(|&a, &b| {
                inst.dist[current][a]
                    .total_cmp(&inst.dist[current][b])
                    .then_with(|| inst.tie_key(a).cmp(&inst.tie_key(b)))
            })
            .expect("unvisited task remains");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

fn two_opt(inst: &Instance<'_>, mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    let start = inst.tasks.len();
    let d = &inst.dist;
    let mut cost = inst.path_cost(&order);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            let before = if i == 0 { start } else { order[i - 1] };
            for j in i + 1..n {
                let mut delta = d[before][order[j]] - d[before][order[i]];
                if j + 1 < n {
                    delta += d[order[i]][order[j + 1]] - d[order[j]][order[j + 1]];
                }
                if delta < -IMPROVEMENT_EPS && best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let mut trial = order.clone();
        trial[i..=j].reverse();
        let trial_cost = inst.path_cost(&trial);
        // Guard against rounding: only keep moves that lower the summed cost.
        if trial_cost >= cost {
            break;
        }
        order = trial;
        cost = trial_cost;
    }
    order
}

/// Exhaustive minimum over all visiting orders. Among equal-cost orders the
/// lexicographically smallest task-id sequence wins.
pub fn optimal_route(
    tasks: &[SamplingTask],
    start: &PointId,
    registry: &Registry,
    model: &DistanceModel,
) -> Result<RoutePlan, SequencerError> {
    if tasks.is_empty() {
        return Err(SequencerError::EmptyCluster);
    }
    if tasks.len() > OPTIMAL_ROUTE_LIMIT {
        return Err(SequencerError::TooLarge(tasks.len()));
    }
    let inst = Instance::build(tasks, Some(start), registry, model)?;
    let mut perm: Vec<usize> = (0..tasks.len()).collect();
    perm.sort_by(|&a, &b| tasks[a].task_id.cmp(&tasks[b].task_id));
    let rank: Vec<usize> = {
        let mut r = vec![0; perm.len()];
        for (pos, &i) in perm.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    let mut best = perm.clone();
    let mut best_cost = inst.path_cost(&perm);
    while next_permutation(&mut perm, &rank) {
        let c = inst.path_cost(&perm);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
    }
    Ok(inst.plan(start, &best))
}

/// Advances `perm` to the next arrangement in the order given by `rank`.
fn next_permutation(perm: &mut [usize], rank: &[usize]) -> bool {
    let r = |i: usize| rank[perm[i]];
    let n = perm.len();
    let Some(i) = (1..n).rev().find(|&i| r(i - 1) < r(i)) else {
        return false;
    };
    let j = (i..n).rev().find(|&j| r(j) > r(i - 1)).expect("pivot has a successor");
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// One route per cluster (by zone, or k-medoids when `k` is set). Each route
/// starts at `start`, or at the smallest point id of its cluster.
pub fn plan_routes(
    tasks: &[SamplingTask],
    registry: &Registry,
    k: Option<usize>,
    start: Option<&PointId>,
    model: &DistanceModel,
) -> Result<Vec<RoutePlan>, SequencerError> {
    if tasks.is_empty() {
        return Err(SequencerError::EmptyCluster);
    }
    let assignment = cluster_tasks(tasks, registry, k, model)?;
    let mut groups: Vec<Vec<SamplingTask>> = vec![Vec::new(); assignment.k];
    for t in tasks {
        groups[assignment.assignment[&t.task_id]].push(t.clone());
    }
    groups
        .iter()
        .map(|group| {
            let start = match start {
                Some(p) => p.clone(),
                None => group.iter().map(|t| &t.point_id).min().ok_or(SequencerError::EmptyCluster)?.clone(),
            };
            sequence_route(group, &start, registry, model)
        })
        .collect()
}

/// Recomputes a plan's cost from its stops.
pub fn route_cost(
    plan: &RoutePlan,
    registry: &Registry,
    model: &DistanceModel,
) -> Result<f64, SequencerError> {
    let mut prev = resolve(registry, &plan.start_point)?;
    let mut total = 0.0;
    for stop in &plan.stops {
        let p = resolve(registry, &stop.point_id)?;
        total += model.distance(prev, p);
        prev = p;
    }
    Ok(total)
}
