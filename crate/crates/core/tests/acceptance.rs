//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line regardless of output capture.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topo_sb::chu::{full_chu, hasse, parallel, constrain, ActionLabel, ChuOrder};
use topo_sb::entropy::persistent_entropy;
use topo_sb::immune::{coexistence_graph, field, run, step, threshold, AffinityMatrix, SimConfig, Simulation};
use topo_sb::persistence::{chain_boundary, Interval};
use topo_sb::pipeline::{run_pipeline, same_target_mutex, PipelineConfig};
use topo_sb::{betti_numbers, build_filtration, persistent_homology, Barcode, WeightOrder, WeightedGraph};

use common::{square_of_triangles, Shape};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_homology() -> Check {
    let c = build_filtration(&square_of_triangles(), WeightOrder::Descending, 2);
    let b = persistent_homology(&c, 1).map_err(|e| e.to_string())?;
    let last = c.max_filter();
    let betti = b.betti_at(last, 1);
    ensure(betti == [1, 1], || format!("betti at {last} = {betti:?}"))?;
    let h1: Vec<&Interval> = b.in_dim(1).collect();
    ensure(h1.len() == 1 && h1[0].birth == 3, || format!("H1 bars {h1:?}"))?;
    let gen = &h1[0].generator;
    ensure(gen.len() == 4 && gen.iter().all(|s| s.dim() == 1), || format!("generator {gen:?}"))?;
    ensure(chain_boundary(gen).is_empty(), || "generator is not a cycle".into())?;
    let verts: BTreeSet<usize> = gen.iter().flat_map(|s| s.vertices().iter().copied()).collect();
    ensure(verts.len() == 4, || format!("generator touches {verts:?}"))?;
    Ok(format!("β = {betti:?}, H1 born at 3, generator on {verts:?}"))
}

fn fixture_entropy() -> Check {
    let c = build_filtration(&square_of_triangles(), WeightOrder::Descending, 2);
    let b = persistent_homology(&c, 1).map_err(|e| e.to_string())?;
    let h = persistent_entropy(&b).map_err(|e| e.to_string())?;
    ensure((h - 0.5).abs() <= 0.001, || format!("H = {h}"))?;
    Ok(format!("H = {h:.6}"))
}

fn random_graph(rng: &mut ChaCha8Rng) -> WeightedGraph {
    let n = rng.gen_range(1..=8);
    let p: f64 = rng.gen_range(0.2..1.0);
    let distinct = rng.gen_range(1..=6u32);
    let mut g = WeightedGraph::with_vertices(n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p) {
                g.add_edge(u, v, f64::from(rng.gen_range(1..=distinct))).unwrap();
            }
        }
    }
    g
}

fn random_homology() -> Check {
    const GRAPHS: usize = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    for k in 0..GRAPHS {
        let g = random_graph(&mut rng);
        let c = build_filtration(&g, WeightOrder::Descending, 8);
        let b = persistent_homology(&c, 7).map_err(|e| format!("graph {k}: {e}"))?;
        for t in 0..=c.max_filter() {
            let mut oracle = betti_numbers(&c, t);
            oracle.resize(8, 0);
            let got = b.betti_at(t, 7);
            ensure(got == oracle, || format!("graph {k} index {t}: {got:?} vs {oracle:?}"))?;
            let mut euler_cells = 0i64;
            for s in c.at(t) {
                euler_cells += if s.dim() % 2 == 0 { 1 } else { -1 };
            }
            let euler_betti: i64 = got
                .iter()
                .enumerate()
                .map(|(d, &x)| if d % 2 == 0 { x as i64 } else { -(x as i64) })
                .sum();
            ensure(euler_cells == euler_betti, || {
                format!("graph {k} index {t}: χ {euler_cells} vs {euler_betti}")
            })?;
            checked += 1;
        }
    }
    Ok(format!("{GRAPHS} graphs, {checked} filter indices"))
}

fn random_barcode(rng: &mut ChaCha8Rng) -> Barcode {
    let max_filter = rng.gen_range(1..20);
    let n = rng.gen_range(1..16);
    let intervals = (0..n)
        .map(|_| {
            let birth = rng.gen_range(0..max_filter);
            let death = rng.gen_bool(0.7).then(|| rng.gen_range(birth + 1..=max_filter));
            bar(rng.gen_range(0..3), birth, death)
        })
        .collect();
    Barcode {
        max_filter,
        intervals,
        ladder: Vec::new(),
    }
}

fn bar(dim: usize, birth: usize, death: Option<usize>) -> Interval {
    Interval {
        dim,
        birth,
        death,
        generator: Vec::new(),
        birth_weight: None,
        death_weight: None,
    }
}

fn entropy_properties() -> Check {
    const BARCODES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xe17);
    for k in 0..BARCODES {
        let b = random_barcode(&mut rng);
        let n = b.intervals.len() as f64;
        let h = persistent_entropy(&b).map_err(|e| format!("barcode {k}: {e}"))?;
        ensure((0.0..=n.ln() + 1e-12).contains(&h), || format!("barcode {k}: H = {h}, ln n = {}", n.ln()))?;

        let mut shuffled = b.clone();
        shuffled.intervals.shuffle(&mut rng);
        let hs = persistent_entropy(&shuffled).map_err(|e| e.to_string())?;
        ensure(hs == h, || format!("barcode {k}: permuted {hs} vs {h}"))?;

        let s = rng.gen_range(2..10usize);
        let scaled = Barcode {
            max_filter: (b.max_filter + 1) * s - 1,
            intervals: b
                .intervals
                .iter()
                .map(|i| bar(i.dim, i.birth * s, i.death.map(|d| d * s)))
                .collect(),
            ladder: Vec::new(),
        };
        let hk = persistent_entropy(&scaled).map_err(|e| e.to_string())?;
        ensure((hk - h).abs() <= 1e-12, || format!("barcode {k}: scaled by {s} {hk} vs {h}"))?;

        let m = rng.gen_range(1..40usize);
        let len = rng.gen_range(1..=b.max_filter);
        let equal = Barcode {
            max_filter: b.max_filter,
            intervals: (0..m).map(|_| bar(0, 0, Some(len))).collect(),
            ladder: Vec::new(),
        };
        let he = persistent_entropy(&equal).map_err(|e| e.to_string())?;
        ensure((he - (m as f64).ln()).abs() <= 1e-12, || format!("{m} equal bars: {he}"))?;
    }
    Ok(format!("{BARCODES} barcodes"))
}

fn parse_state(s: &str) -> Vec<u8> {
    s.bytes().map(|b| b - b'0').collect()
}

fn chu_goldens() -> Check {
    let acts = vec![
        ActionLabel::new("elicits", 1, 13),
        ActionLabel::new("reduces", 1, 13),
        ActionLabel::new("elicits", 13, 1),
        ActionLabel::new("reduces", 13, 1),
    ];
    let single = full_chu(acts[..2].to_vec()).map_err(|e| e.to_string())?;
    let expected = "action,s1,s2,s3,s4,s5,s6,s7,s8,s9\n\
                    \"(elicits,1,13)\",0,0,0,1,1,1,2,2,2\n\
                    \"(reduces,1,13)\",0,1,2,0,1,2,0,1,2\n";
    let csv = single.to_csv(ChuOrder::Lexicographic);
    ensure(csv == expected, || format!("single-agent matrix:\n{csv}"))?;
    let h = hasse(&single);
    ensure(h.has_edge(&[1, 0], &[1, 1]), || "missing (1,0) -> (1,1)".into())?;
    ensure(!h.has_edge(&[1, 0], &[0, 1]), || "spurious (1,0) -> (0,1)".into())?;

    let other = full_chu(acts[2..].to_vec()).map_err(|e| e.to_string())?;
    let both = parallel(&single, &other).map_err(|e| e.to_string())?;
    let pair = constrain(&both, &same_target_mutex(both.actions())).map_err(|e| e.to_string())?;
    ensure(pair.len() == 25, || format!("{} pair states", pair.len()))?;
    let rows: [[u8; 25]; 4] = [
        [0, 1, 2, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2],
        [0, 0, 0, 0, 0, 1, 2, 0, 0, 1, 0, 2, 0, 1, 0, 2, 0, 1, 0, 2, 0, 1, 0, 2, 0],
        [0, 0, 0, 0, 0, 0, 0, 1, 2, 0, 1, 0, 2, 0, 1, 0, 2, 0, 1, 0, 2, 0, 1, 0, 2],
    ];
    for (col, s) in pair.states_in(ChuOrder::BySupport).iter().enumerate() {
        let want: Vec<u8> = rows.iter().map(|r| r[col]).collect();
        ensure(s.to_vec() == want, || format!("column s{}: {s:?} vs {want:?}", col + 1))?;
    }
    let lattice = hasse(&pair);
    let want: BTreeSet<(Vec<u8>, Vec<u8>)> = include_str!("data/pair_hasse_edges.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once(' '))
        .map(|(a, b)| (parse_state(a), parse_state(b)))
        .collect();
    let got: BTreeSet<(Vec<u8>, Vec<u8>)> = lattice
        .edges
        .iter()
        .map(|&(a, b)| (lattice.nodes[a].clone(), lattice.nodes[b].clone()))
        .collect();
    ensure(got == want, || format!("{} covering edges, expected {}", got.len(), want.len()))?;
    Ok(format!("9-state and 25-state matrices, {} covering edges", got.len()))
}

fn simulation_shape() -> Check {
    let cfg = SimConfig::default();
    let series = run(&cfg).map_err(|e| e.to_string())?;
    let out = run_pipeline(&series, &PipelineConfig::new()).map_err(|e| e.to_string())?;
    let shape = Shape::of(&out);
    ensure(shape.ok(), || format!("{shape:?}"))?;
    Ok(format!(
        "seed {}, {} antibodies, {} peaks, memory loop on {}",
        cfg.seed,
        cfg.repertoire,
        shape.peaks,
        shape.positive_self_loop.unwrap_or_default()
    ))
}

fn states3() -> impl Iterator<Item = Vec<f64>> {
    (0..8u32).map(|m| (0..3).map(|i| f64::from((m >> i) & 1)).collect())
}

fn fixed_points(j: &AffinityMatrix, s: f64) -> Result<Vec<Vec<f64>>, String> {
    let mut out = Vec::new();
    for c in states3() {
        let mut consistent = true;
        for i in 0..3 {
            consistent &= c[i] == threshold(field(i, j, &c, s).map_err(|e| e.to_string())?);
        }
        let fixed = step(&c, j, s, &[]).map_err(|e| e.to_string())? == c;
        ensure(consistent == fixed, || format!("state {c:?}: consistent {consistent}, fixed {fixed}"))?;
        if fixed {
            out.push(c);
        }
    }
    Ok(out)
}

fn three_node_fixed_points() -> Check {
    let pair = AffinityMatrix::from_rows(&[
        vec![0.0, 1.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ])
    .map_err(|e| e.to_string())?;
    let got = fixed_points(&pair, -0.5)?;
    let want = vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]];
    ensure(got == want, || format!("mutual pair: {got:?}"))?;

    let rivals = AffinityMatrix::from_rows(&[
        vec![0.0, -1.0, -1.0],
        vec![-1.0, 0.0, -1.0],
        vec![-1.0, -1.0, 0.0],
    ])
    .map_err(|e| e.to_string())?;
    let got = fixed_points(&rivals, 0.5)?;
    let want = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    ensure(got == want, || format!("mutual rivals: {got:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    const RANDOM: usize = 500;
    for _ in 0..RANDOM {
        let mut j = AffinityMatrix::zeros(3);
        for a in 0..3 {
            for b in (a + 1)..3 {
                j.set(a, b, rng.gen_range(-1.0..=1.0));
            }
        }
        fixed_points(&j, rng.gen_range(-1.0..1.0))?;
    }
    Ok(format!("2 hand-built and {RANDOM} random networks"))
}

fn volume_scaling() -> Check {
    let mut sim = Simulation::new(SimConfig::default()).map_err(|e| e.to_string())?;
    for _ in 0..60 {
        sim.advance().map_err(|e| e.to_string())?;
    }
    let base = coexistence_graph(&sim.antibodies).map_err(|e| e.to_string())?;
    ensure(base.num_edges() > 0, || "empty coexistence graph".into())?;
    let strip = |b: &Barcode| b.intervals.iter().map(|i| (i.dim, i.birth, i.death)).collect::<Vec<_>>();
    let b0 = persistent_homology(&build_filtration(&base, WeightOrder::Descending, 2), 1).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for lambda in [0.5, 2.0, 10.0] {
        let mut pop = sim.antibodies.clone();
        pop.iter_mut().for_each(|a| a.volume *= lambda);
        let g = coexistence_graph(&pop).map_err(|e| e.to_string())?;
        ensure(g.num_edges() == base.num_edges(), || format!("λ = {lambda}: edge count changed"))?;
        for (u, v, w) in base.edges() {
            let scaled = g.weight(u, v).ok_or_else(|| format!("λ = {lambda}: edge {u}-{v} lost"))?;
            let rel = (scaled - w * lambda).abs() / (w * lambda);
            worst = worst.max(rel);
            ensure(rel <= 4.0 * f64::EPSILON, || format!("λ = {lambda}: {scaled} vs {}", w * lambda))?;
        }
        let b = persistent_homology(&build_filtration(&g, WeightOrder::Descending, 2), 1).map_err(|e| e.to_string())?;
        ensure(strip(&b) == strip(&b0), || format!("λ = {lambda}: barcode changed"))?;
    }
    Ok(format!("{} edges, worst relative error {worst:.1e}", base.num_edges()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Check); 8] = [
        ("fixture homology", Duration::from_secs(1), fixture_homology),
        ("fixture entropy", Duration::from_secs(1), fixture_entropy),
        ("random homology vs rank oracle", Duration::from_secs(60), random_homology),
        ("entropy invariants", Duration::from_secs(10), entropy_properties),
        ("chu goldens", Duration::from_secs(1), chu_goldens),
        ("immune simulation shape", Duration::from_secs(300), simulation_shape),
        ("three-node fixed points", Duration::from_secs(1), three_node_fixed_points),
        ("volume scaling", Duration::from_secs(5), volume_scaling),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let verdict = match result {
            Ok(detail) if took <= limit => format!("PASS {}: {name} ({took:.2?}): {detail}", k + 1),
            Ok(detail) => format!("FAIL {}: {name} took {took:.2?}, limit {limit:?}: {detail}", k + 1),
            Err(why) => format!("FAIL {}: {name} ({took:.2?}): {why}", k + 1),
        };
        if verdict.starts_with("FAIL") {
            failed += 1;
        }
        println!("{verdict}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
