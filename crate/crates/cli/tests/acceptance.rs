//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness; exits nonzero if any check fails.

#[allow(dead_code)]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::*;
use mvlabel_core::dataio::{
    parse_detections, render_detections, split_dataset, DatasetManifest, FrameRecord,
};
use mvlabel_core::dataio::{Split, SplitOrdering};
use mvlabel_core::heatmap::raster::{encode, read_raster};
use mvlabel_core::heatmap::{extract_locations, gaussian_kernel, label_pipeline, make_labels};
use mvlabel_core::metrics::{evaluate, match_frame, match_points};
use mvlabel_core::rng::Stream;
use mvlabel_core::{
    CellIndex, Detection, DetectionSet, GridPreset, GridSpec, GroundGrid, Heatmap, Heatmap32,
    KernelNormalization, KernelSpec, OutOfBoundsPolicy, WorldPoint,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Best (cardinality, −distance) over every partial injection of detections into ground truth.
fn brute_force(d: &[WorldPoint], g: &[WorldPoint], radius: f64) -> (usize, f64) {
    fn go(
        i: usize,
        d: &[WorldPoint],
        g: &[WorldPoint],
        r: f64,
        used: &mut [bool],
        n: usize,
        dist: f64,
        best: &mut (usize, f64),
    ) {
        if i == d.len() {
            if n > best.0 || (n == best.0 && dist < best.1) {
                *best = (n, dist);
            }
            return;
        }
        go(i + 1, d, g, r, used, n, dist, best);
        for j in 0..g.len() {
            let dj = d[i].distance(&g[j]);
            if !used[j] && dj <= r {
                used[j] = true;
                go(i + 1, d, g, r, used, n + 1, dist + dj, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(
        0,
        d,
        g,
        radius,
        &mut vec![false; g.len()],
        0,
        0.0,
        &mut best,
    );
    best
}

fn matching_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Stream::new(1);
    let frames = 1000;
    let mut max_err = 0.0f64;
    for f in 0..frames {
        let pts = |rng: &mut Stream, n: u64| -> Vec<WorldPoint> {
            (0..rng.below(n + 1))
                .map(|_| WorldPoint::new(rng.uniform_range(0.0, 1.5), rng.uniform_range(0.0, 1.5)))
                .collect()
        };
        let d = pts(&mut rng, 6);
        let g = pts(&mut rng, 6);
        let m = match_points(&d, &g, 0.5).map_err(|e| e.to_string())?;
        let (tp, dist) = brute_force(&d, &g, 0.5);
        ensure(m.pairs.len() == tp, || {
            format!("frame {f}: TP {} vs oracle {tp}", m.pairs.len())
        })?;
        let err = (m.total_distance() - dist).abs();
        ensure(err <= 1e-9, || {
            format!(
                "frame {f}: distance {} vs oracle {dist}",
                m.total_distance()
            )
        })?;
        max_err = max_err.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{frames} frames, max distance error {max_err:.1e}, {secs:.2} s"
    ))
}

fn metric_fixtures() -> Outcome {
    let gts: Vec<Detection> = (0..10)
        .map(|i| Detection::new(0.5 + i as f64, 1.0, 1.0))
        .collect();
    let mut dets = gts[..8].to_vec();
    dets.push(Detection::new(20.0, 20.0, 0.9));
    let frame = (
        DetectionSet::new("a", dets).unwrap(),
        DetectionSet::new("a", gts).unwrap(),
    );
    let r = evaluate(&[frame], 0.5).map_err(|e| e.to_string())?;
    let close = |v: Option<f64>, want: f64| v.is_some_and(|v| (v - want).abs() <= 1e-12);
    ensure((r.tp, r.fp, r.fn_, r.n_gt) == (8, 1, 2, 10), || {
        format!("counts {:?}", (r.tp, r.fp, r.fn_, r.n_gt))
    })?;
    ensure(close(r.moda, 0.7), || format!("MODA {:?}", r.moda))?;
    ensure(close(r.precision, 8.0 / 9.0), || {
        format!("precision {:?}", r.precision)
    })?;
    ensure(close(r.recall, 0.8), || format!("recall {:?}", r.recall))?;
    ensure(close(r.modp, 1.0), || format!("MODP {:?}", r.modp))?;

    let gts = vec![Detection::new(1.0, 1.0, 1.0), Detection::new(5.0, 5.0, 1.0)];
    let dets = vec![Detection::new(1.3, 1.0, 1.0), Detection::new(5.0, 5.3, 1.0)];
    let r = evaluate(
        &[(
            DetectionSet::new("b", dets).unwrap(),
            DetectionSet::new("b", gts).unwrap(),
        )],
        0.5,
    )
    .map_err(|e| e.to_string())?;
    ensure(close(r.modp, 0.4), || {
        format!("two pairs at 0.3 m: MODP {:?}", r.modp)
    })?;

    let edge = match_points(
        &[WorldPoint::new(0.0, 0.0)],
        &[WorldPoint::new(0.5, 0.0)],
        0.5,
    )
    .unwrap();
    ensure(edge.pairs.len() == 1, || {
        "pair at exactly 0.5 m not matched".into()
    })?;
    Ok("MODA 0.7, precision 8/9, recall 0.8, MODP 1.0; MODP 0.4 at 0.3 m; radius inclusive".into())
}

fn naive_convolution(input: &Heatmap, size: usize, sigma: f64) -> Vec<f64> {
    let (rows, cols) = (
        input.grid().n_rows() as isize,
        input.grid().n_cols() as isize,
    );
    let h = (size / 2) as isize;
    let mut out = vec![0.0; (rows * cols) as usize];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for a in -h..=h {
                for b in -h..=h {
                    let (rr, cc) = (r - a, c - b);
                    if rr < 0 || cc < 0 || rr >= rows || cc >= cols {
                        continue;
                    }
                    let k = (-((a * a + b * b) as f64) / (2.0 * sigma * sigma)).exp();
                    acc += k * input.values()[(rr * cols + cc) as usize];
                }
            }
            out[(r * cols + c) as usize] = acc;
        }
    }
    out
}

fn convolution_oracle() -> Outcome {
    let mut rng = Stream::new(3);
    let mut max_err = 0.0f64;
    for n in 0..200 {
        let rows = 1 + rng.below(64) as usize;
        let cols = 1 + rng.below(64) as usize;
        let size = 1 + 2 * rng.below(11) as usize;
        let sigma = rng.uniform_range(0.3, 6.0);
        let density = rng.uniform();
        let grid = GroundGrid::new(WorldPoint::new(0.0, 0.0), 0.1, rows, cols).unwrap();
        let occ: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.uniform() < density { 1.0 } else { 0.0 })
            .collect();
        let occ = Heatmap::from_values(grid, occ).unwrap();
        let kernel = gaussian_kernel(size, sigma, KernelNormalization::PeakOne).unwrap();
        let got = make_labels(&occ, &kernel);
        let want = naive_convolution(&occ, size, sigma);
        for (i, (a, b)) in got.values().iter().zip(&want).enumerate() {
            let err = (a - b).abs();
            ensure(err <= 1e-12, || {
                format!("instance {n} ({rows}×{cols}, k={size}, σ={sigma}): cell {i} {a} vs {b}")
            })?;
            max_err = max_err.max(err);
        }
    }
    let pdf = gaussian_kernel(41, 5.0, KernelNormalization::LiteralPdf).unwrap();
    let want = 1.0 / (50.0 * std::f64::consts::PI);
    ensure((pdf.center() - want).abs() <= 1e-12, || {
        format!("literal-pdf center {} vs {want}", pdf.center())
    })?;
    Ok(format!(
        "200 instances, max error {max_err:.1e}; literal-pdf center {:.15}",
        pdf.center()
    ))
}

fn label_round_trip() -> Outcome {
    let grid = GridPreset::Wildtrack.grid::<f64>();
    let kernel = KernelSpec::default().build::<f64>().unwrap();
    let mut rng = Stream::new(4);
    let mut total = 0;
    for s in 0..100 {
        let want_n = 1 + rng.below(12) as usize;
        let mut cells: Vec<CellIndex> = Vec::new();
        let mut tries = 0;
        while cells.len() < want_n && tries < 10_000 {
            tries += 1;
            let c = CellIndex::new(
                rng.below(grid.n_rows() as u64) as usize,
                rng.below(grid.n_cols() as u64) as usize,
            );
            let p = grid.cell_to_world(c).unwrap();
            if cells
                .iter()
                .all(|q| grid.cell_to_world(*q).unwrap().distance(&p) >= 2.5)
            {
                cells.push(c);
            }
        }
        let dets: Vec<Detection> = cells
            .iter()
            .map(|c| {
                let p = grid.cell_to_world(*c).unwrap();
                Detection::new(p.x, p.y, 1.0)
            })
            .collect();
        let set = DetectionSet::new(format!("s{s}"), dets).unwrap();
        let heat = label_pipeline(&set, &grid, &kernel, OutOfBoundsPolicy::Reject)
            .map_err(|e| e.to_string())?;
        let found = extract_locations(&heat, 0.4, 0.5).map_err(|e| e.to_string())?;
        let got: BTreeSet<CellIndex> = found
            .iter()
            .map(|d| grid.world_to_cell(&d.location).unwrap())
            .collect();
        let want: BTreeSet<CellIndex> = cells.iter().copied().collect();
        ensure(got.len() == found.len() && got == want, || {
            format!("scene {s}: recovered {got:?}, placed {want:?}")
        })?;
        let m = match_frame(&DetectionSet::new("x", found).unwrap(), &set, 0.5).unwrap();
        ensure(
            m.false_positives.is_empty() && m.false_negatives.is_empty(),
            || format!("scene {s}: FP/FN"),
        )?;
        total += cells.len();
    }
    Ok(format!("100 scenes, {total} people, all cells recovered"))
}

fn end_to_end_simulation() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = out.to_str().unwrap();
    let sim = mvlabel(&[
        "simulate",
        "--out",
        o,
        "--frames",
        "400",
        "--people",
        "10",
        "--p-miss",
        "0.2",
        "--fp-per-frame",
        "1",
        "--loc-sigma",
        "0",
        "--seed",
        "7",
    ]);
    ensure(sim.status.success(), || {
        format!("simulate failed: {}", stderr(&sim))
    })?;
    let eval = mvlabel(&[
        "evaluate",
        &format!("{o}/detections.jsonl"),
        &format!("{o}/annotations.jsonl"),
    ]);
    ensure(eval.status.success(), || {
        format!("evaluate failed: {}", stderr(&eval))
    })?;
    let r: serde_json::Value = serde_json::from_slice(&eval.stdout).map_err(|e| e.to_string())?;
    let (moda, recall) = (
        r["moda"].as_f64().unwrap_or(f64::NAN),
        r["recall"].as_f64().unwrap_or(f64::NAN),
    );
    ensure(r["n_gt"] == 4000, || format!("n_gt {}", r["n_gt"]))?;
    ensure((moda - 0.7).abs() <= 0.03, || format!("MODA {moda}"))?;
    ensure((recall - 0.8).abs() <= 0.02, || format!("recall {recall}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("MODA {moda:.4}, recall {recall:.4}, {secs:.2} s"))
}

fn campaign_fixed_point() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    write(
        &grid,
        r#"{"origin": [0.0, 0.0], "cell_size": 0.1, "n_rows": 60, "n_cols": 80}"#,
    );
    let data = dir.path().join("data");
    let sim = mvlabel(&[
        "simulate",
        "--grid",
        grid.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--frames",
        "40",
        "--people",
        "6",
        "--min-separation",
        "0.6",
        "--p-miss",
        "0.2",
        "--fp-per-frame",
        "0.5",
        "--loc-sigma",
        "0.05",
        "--seed",
        "5",
    ]);
    ensure(sim.status.success(), || stderr(&sim))?;
    let run = dir.path().join("run");
    let cfg = mock_campaign(
        &data.join("manifest.json"),
        &data.join("detections.jsonl"),
        &run,
        3,
        &dir.path().join("log"),
    );
    let cfg_path = dir.path().join("campaign.json");
    write(&cfg_path, &cfg.to_string());
    let out = mvlabel(&["orchestrate", "--config", cfg_path.to_str().unwrap()]);
    ensure(out.status.success(), || {
        format!("orchestrate failed: {}", stderr(&out))
    })?;
    let rows: Vec<serde_json::Value> =
        serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(rows.len() == 4, || format!("{} summary rows", rows.len()))?;
    let metrics = |r: &serde_json::Value| {
        [
            r["moda"].clone(),
            r["modp"].clone(),
            r["precision"].clone(),
            r["recall"].clone(),
        ]
    };
    ensure(metrics(&rows[1]).iter().all(|v| v.is_f64()), || {
        format!("round 1 metrics {:?}", metrics(&rows[1]))
    })?;
    for i in 2..=3 {
        ensure(metrics(&rows[i]) == metrics(&rows[1]), || {
            format!(
                "round {i} metrics {:?} vs {:?}",
                metrics(&rows[i]),
                metrics(&rows[1])
            )
        })?;
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let m2 = read(&run.join("round-02/labels/manifest.json"))?;
    let m3 = read(&run.join("round-03/labels/manifest.json"))?;
    ensure(m2 == m3, || {
        "round 2 and round 3 label manifests differ".into()
    })?;
    Ok(format!(
        "rounds 1-3 MODA {}, label manifests identical ({} bytes)",
        rows[1]["moda"],
        m2.len()
    ))
}

fn format_fidelity() -> Outcome {
    let mut rng = Stream::new(7);
    for n in 0..1000 {
        let rows = 1 + rng.below(40) as usize;
        let cols = 1 + rng.below(40) as usize;
        let origin = WorldPoint::new(
            rng.uniform_range(-50.0, 50.0),
            rng.uniform_range(-50.0, 50.0),
        );
        let grid = GroundGrid::new(origin, rng.uniform_range(0.01, 1.0), rows, cols).unwrap();
        let values: Vec<f32> = (0..rows * cols)
            .map(|_| loop {
                let v = f32::from_bits(rng.next_u64() as u32 & 0x7fff_ffff);
                if v.is_finite() {
                    break if rng.below(4) == 0 { 0.0 } else { v };
                }
            })
            .collect();
        let heat = Heatmap32::from_values(grid.cast(), values).unwrap();
        let id = format!("h{n}");
        let back =
            read_raster(encode(&id, &heat).as_slice()).map_err(|e| format!("heatmap {n}: {e}"))?;
        let same = back.frame_id == id
            && back.grid == heat.grid().cast::<f64>()
            && back
                .heatmap
                .values()
                .iter()
                .zip(heat.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("heatmap {n} changed in round trip"))?;
    }
    let mut sets = Vec::new();
    for n in 0..1000 {
        let k = rng.below(12) as usize;
        let scale = 10f64.powi(rng.below(10) as i32 - 4);
        let dets: Vec<Detection> = (0..k)
            .map(|_| {
                Detection::new(
                    rng.uniform_range(-1.0, 1.0) * scale,
                    rng.uniform_range(-1.0, 1.0) * scale,
                    rng.uniform(),
                )
            })
            .collect();
        sets.push(DetectionSet::new(format!("d{n}"), dets).unwrap());
    }
    let back = parse_detections(&render_detections(&sets), "memory").map_err(|e| e.to_string())?;
    ensure(back.len() == sets.len(), || {
        format!("{} of {} sets read back", back.len(), sets.len())
    })?;
    for (a, b) in sets.iter().zip(&back) {
        let ok = a.frame_id() == b.frame_id()
            && a.len() == b.len()
            && a.detections().iter().zip(b.detections()).all(|(p, q)| {
                (p.location.x - q.location.x).abs() <= 1e-9
                    && (p.location.y - q.location.y).abs() <= 1e-9
                    && (p.score - q.score).abs() <= 1e-9
            });
        ensure(ok, || format!("set {} changed in round trip", a.frame_id()))?;
    }
    let (count, failures) = check_corpus();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!(
        "1000 rasters bit-exact, 1000 detection sets, {count} malformed files rejected"
    ))
}

fn split_conformance() -> Outcome {
    let manifest = DatasetManifest {
        name: "split".into(),
        grid: GridSpec::Preset(GridPreset::Wildtrack),
        cameras: Vec::new(),
        frames: (0..400)
            .map(|i| FrameRecord {
                frame_id: format!("{i:08}"),
                images: Vec::new(),
            })
            .collect(),
        annotations: None,
        split: Default::default(),
    };
    let split = split_dataset(&manifest, &[0.8, 0.1, 0.1], SplitOrdering::Sequential)
        .map_err(|e| e.to_string())?;
    let ids = |s: Split| {
        split
            .frames_in(s)
            .iter()
            .map(|f| f.frame_id.clone())
            .collect::<Vec<_>>()
    };
    let test = ids(Split::Test);
    let want: Vec<String> = (360..400).map(|i| format!("{i:08}")).collect();
    ensure(test == want, || format!("test split {:?}..", test.first()))?;
    ensure(
        ids(Split::Val).len() == 40 && ids(Split::Train).len() == 320,
        || "train/val sizes".into(),
    )?;
    Ok("test = frames 360..399, val 40, train 320".into())
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("matching oracle equivalence", matching_oracle),
        ("metric fixtures", metric_fixtures),
        ("convolution oracle", convolution_oracle),
        ("label round-trip", label_round_trip),
        ("end-to-end simulation", end_to_end_simulation),
        ("campaign fixed point", campaign_fixed_point),
        ("format fidelity", format_fidelity),
        ("split conformance", split_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
