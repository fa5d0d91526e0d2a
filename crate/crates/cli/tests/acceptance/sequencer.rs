//! Small routing instances against exhaustive search and the greedy tour.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sampling_core::domain::{Coords, MethodId, Registry, SamplingPoint, SamplingTask, SamplingZone, WaterType};
use sampling_core::sequencer::{greedy_route, sequence_route, DistanceModel};

use crate::{ensure, Verdict};

const SINGLE_ZONE: u64 = 200;
const TWO_ZONE: u64 = 20;
const MAX_TASKS: usize = 8;
const W: f64 = 5.0;
/// Reported only; the verdict rests on the dominance checks.
const EXPECTED_MEAN_RATIO: f64 = 1.15;

struct Instance {
    /// (zone, x, y); point 0 is the start.
    points: Vec<(usize, f64, f64)>,
    /// Point index per task.
    tasks: Vec<usize>,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, zones: usize) -> Self {
        let n = rng.gen_range(1..=MAX_TASKS);
        let points = (0..=n).map(|_| (rng.gen_range(0..zones), rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let tasks = (0..n).map(|_| rng.gen_range(1..=n)).collect();
        Self { points, tasks }
    }

    fn registry(&self) -> Registry {
        let zones: BTreeSet<usize> = self.points.iter().map(|p| p.0).collect();
        Registry::new(
            zones
                .iter()
                .map(|z| SamplingZone { zone_id: format!("Z-{z}").into(), name: format!("Zone {z}"), floor_plan_ref: String::new() })
                .collect(),
            self.points
                .iter()
                .enumerate()
                .map(|(i, &(z, x, y))| SamplingPoint {
                    point_id: format!("P-{i:02}").into(),
                    zone_id: format!("Z-{z}").into(),
                    coords: Coords::new(x, y),
                    water_type: WaterType::PurifiedWater,
                    mechanical_notes: String::new(),
                    media_refs: Vec::new(),
                })
                .collect(),
            Vec::new(),
        )
        .unwrap()
    }

    fn sampling_tasks(&self) -> Vec<SamplingTask> {
        let date = NaiveDate::from_ymd_opt(2024, 3, 5).unwrap();
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                SamplingTask::new(
                    format!("Z-{}", self.points[p].0).into(),
                    format!("P-{p:02}").into(),
                    MethodId::new(format!("M-{i}")),
                    date,
                    "Technician".into(),
                )
            })
            .collect()
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let (za, xa, ya) = self.points[a];
        let (zb, xb, yb) = self.points[b];
        let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
        if za == zb { d } else { d + W }
    }

    /// Cheapest open path from point 0 over every task order.
    fn optimum(&self) -> f64 {
        fn go(inst: &Instance, at: usize, left: &mut Vec<usize>, acc: f64, best: &mut f64) {
            if acc >= *best {
                return;
            }
            if left.is_empty() {
                *best = acc;
                return;
            }
            for i in 0..left.len() {
                let p = left.remove(i);
                go(inst, p, left, acc + inst.dist(at, p), best);
                left.insert(i, p);
            }
        }
        let mut best = f64::INFINITY;
        go(self, 0, &mut self.tasks.clone(), 0.0, &mut best);
        best
    }
}

pub fn check() -> Verdict {
    let model = DistanceModel::new(W).map_err(|e| e.to_string())?;
    let start = "P-00".into();
    let mut ratios = Vec::new();
    let mut worst: f64 = 1.0;
    for (zones, count, base) in [(1, SINGLE_ZONE, 0u64), (2, TWO_ZONE, 10_000)] {
        for seed in base..base + count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = Instance::random(&mut rng, zones);
            let registry = inst.registry();
            let tasks = inst.sampling_tasks();
            let plan = sequence_route(&tasks, &start, &registry, &model).map_err(|e| e.to_string())?;
            let greedy = greedy_route(&tasks, &start, &registry, &model).map_err(|e| e.to_string())?;
            let best = inst.optimum();
            let tol = 1e-9 * best.max(1.0);
            ensure(plan.stops.len() == tasks.len(), || format!("seed {seed}: route drops tasks"))?;
            ensure(plan.total_cost + tol >= best, || format!("seed {seed}: {} below optimum {best}", plan.total_cost))?;
            ensure(plan.total_cost <= greedy.total_cost + tol, || {
                format!("seed {seed}: 2-opt {} above greedy {}", plan.total_cost, greedy.total_cost)
            })?;
            let ratio = if best > 0.0 { plan.total_cost / best } else { 1.0 };
            worst = worst.max(ratio);
            ratios.push(ratio);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let within = if mean <= EXPECTED_MEAN_RATIO { "within" } else { "above" };
    Ok(format!(
        "{} instances, mean heuristic/optimum {mean:.4} ({within} {EXPECTED_MEAN_RATIO}), worst {worst:.4}, dominance holds",
        ratios.len()
    ))
}
