//! Random class DAGs: closure against reachability, inferred instances
//! against the union of direct instances.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sampling_core::ontology::{load_bfo_skeleton, Iri, KnowledgeBase, Level};

use crate::{ensure, Verdict};

const DAGS: u64 = 100;
const MAX_CLASSES: usize = 200;
const MAX_EDGES: usize = 500;

fn class(i: usize) -> Iri {
    Iri::new(format!("t:C{i:03}"))
}

fn individual(i: usize) -> Iri {
    Iri::new(format!("t:i{i}"))
}

/// Ancestors (inclusive) per class. Parents always have lower indices, so
/// one forward pass settles every set.
fn reachability(parents: &[BTreeSet<usize>]) -> Vec<BTreeSet<usize>> {
    let mut up: Vec<BTreeSet<usize>> = Vec::with_capacity(parents.len());
    for (i, ps) in parents.iter().enumerate() {
        let mut set = BTreeSet::from([i]);
        for &p in ps {
            set.extend(up[p].iter().copied());
        }
        up.push(set);
    }
    up
}

fn one_dag(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=MAX_CLASSES);
    let mut parents = vec![BTreeSet::new(); n];
    let mut edges = 0;
    if n > 1 {
        for _ in 0..rng.gen_range(0..=MAX_EDGES) {
            let child = rng.gen_range(1..n);
            if parents[child].insert(rng.gen_range(0..child)) {
                edges += 1;
            }
        }
    }
    let individuals: Vec<BTreeSet<usize>> = (0..rng.gen_range(0..40))
        .map(|_| (0..rng.gen_range(1..3)).map(|_| rng.gen_range(0..n)).collect())
        .collect();

    let mut kb = KnowledgeBase::new();
    for (i, ps) in parents.iter().enumerate() {
        kb.add_class(class(i), ps.iter().map(|&p| class(p)), Level::Domain)
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }
    for (i, cs) in individuals.iter().enumerate() {
        kb.assert_individual(individual(i), cs.iter().map(|&c| class(c)))
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }

    let up = reachability(&parents);
    for c in 0..n {
        let want: BTreeSet<Iri> = up[c].iter().map(|&a| class(a)).collect();
        let got = kb.subclass_closure(&class(c)).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("seed {seed}: closure of {} differs", class(c)))?;

        let want: BTreeSet<Iri> = individuals
            .iter()
            .enumerate()
            .filter(|(_, cs)| cs.iter().any(|d| up[*d].contains(&c)))
            .map(|(i, _)| individual(i))
            .collect();
        let got = kb.instances_of(&class(c), true).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("seed {seed}: inferred instances of {} differ", class(c)))?;
    }
    Ok((n, edges))
}

pub fn check() -> Verdict {
    let (mut classes, mut edges) = (0, 0);
    for seed in 0..DAGS {
        let (n, e) = one_dag(seed)?;
        classes += n;
        edges += e;
    }
    let bfo = load_bfo_skeleton();
    let entity = Iri::from("bfo:entity");
    for top in ["bfo:continuant", "bfo:occurrent"] {
        let closure = bfo.subclass_closure(&Iri::from(top)).map_err(|e| e.to_string())?;
        ensure(closure.contains(&entity), || format!("{top} is not under bfo:entity"))?;
    }
    ensure(bfo.check_consistency().is_empty(), || "skeleton is inconsistent".to_owned())?;
    Ok(format!("{DAGS} DAGs, {classes} classes, {edges} edges, closures and inferred instances agree"))
}
