//! Frozen oracle outputs checked against the main implementations.
//!
//! `LATAD_REGEN_GOLDEN=1 cargo test --test oracle_golden` rewrites
//! `tests/golden/oracle_cases.json` from the oracles.

use std::path::PathBuf;

use latad::evaluation::{pa_percent_k, point_adjust, segments_from_labels, Metric};
use latad::extractor::ExtractorConfig;
use latad::nn::Tape;
use latad::oracles::{self, OracleCase, OracleMetric};
use latad::scoring::search_threshold;
use latad::training::{total_loss, LatadModel, TrainConfig, Triplet, TripletBatch};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn golden_file() -> PathBuf {
    oracles::golden_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden"), "oracle_cases")
}

fn vecs(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

fn tiny_config() -> ExtractorConfig {
    ExtractorConfig {
        window: 6,
        features: 3,
        d_model: 4,
        transformer_heads: 1,
        seed: 5,
        ..Default::default()
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn build_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = Vec::new();

    for i in 0..6 {
        let n = 12 + 4 * i;
        let y: Vec<u8> = (0..n).map(|t| u8::from((t / 3 + i) % 4 == 0)).collect();
        let y_hat: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        let k = [0.0, 20.0, 50.0][i % 3];
        cases.push(OracleCase {
            operation: "pa_percent_k".into(),
            input: json!({"y": y, "y_hat": y_hat, "k": k}),
            expected: json!({
                "pa": oracles::oracle_point_adjust(&y, &y_hat),
                "pak": oracles::oracle_pa_percent_k(&y, &y_hat, Some(k)),
            }),
            tolerance: 0.0,
            provenance: "oracle_pa_percent_k: outward scan per labeled point".into(),
        });
    }

    for (lambda, n) in [(0.1, 3), (0.0, 2)] {
        let triplets: Vec<Triplet> = (0..2)
            .map(|_| Triplet {
                anchor: random_matrix(&mut rng, 1, 4).remove(0),
                positives: random_matrix(&mut rng, n, 4),
                negatives: random_matrix(&mut rng, n, 4),
            })
            .collect();
        let margins: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..0.999)).collect();
        let batch = TripletBatch { triplets };
        let (c, s, r, t) = oracles::oracle_losses(&batch, &margins, lambda);
        let encoded: Vec<Value> = batch
            .triplets
            .iter()
            .map(|t| json!({"anchor": t.anchor, "positives": t.positives, "negatives": t.negatives}))
            .collect();
        cases.push(OracleCase {
            operation: "losses".into(),
            input: json!({"triplets": encoded, "margins": margins, "lambda": lambda}),
            expected: json!({"comp": c, "sep": s, "reg": r, "total": t}),
            tolerance: 1e-6,
            provenance: "oracle_losses: scalar loops".into(),
        });
    }

    for i in 0..4 {
        let n = 30;
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let y: Vec<u8> = (0..n).map(|t| u8::from((t + i) % 9 < 3)).collect();
        let val: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..0.6)).collect();
        let (metric, name) = [(OracleMetric::F1, "F1"), (OracleMetric::PaK(50.0), "F1_PA50"), (OracleMetric::Pa, "F1_PA")][i % 3];
        let (delta, value) = oracles::oracle_threshold(&scores, &y, &val, metric).unwrap();
        cases.push(OracleCase {
            operation: "threshold".into(),
            input: json!({"scores": scores, "y": y, "validation": val, "metric": name}),
            expected: json!({"threshold": delta, "value": value}),
            tolerance: 1e-12,
            provenance: "oracle_threshold: exhaustive candidate scan".into(),
        });
    }

    let cfg = tiny_config();
    let h = random_matrix(&mut rng, cfg.window, cfg.features);
    let a: Vec<f64> = (0..2 * cfg.window).map(|_| rng.gen_range(-1.0..1.0)).collect();
    cases.push(OracleCase {
        operation: "gat_alpha".into(),
        input: json!({"h": h, "a": a, "slope": cfg.leaky_slope}),
        expected: json!(oracles::oracle_gat_alpha(&h, &a, cfg.leaky_slope)),
        tolerance: 1e-12,
        provenance: "oracle_gat_alpha: pairwise scores and softmax by hand".into(),
    });

    let model = LatadModel::new(&cfg, 1).unwrap();
    let get = |name: &str| {
        let t = model.store.get(model.store.id(name).unwrap());
        t.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<Vec<f64>>>()
    };
    let x = random_matrix(&mut rng, cfg.window, cfg.features);
    let mask = oracles::oracle_mask(
        &x,
        &get("generator.0.fc1.weight"),
        &get("generator.0.fc1.bias")[0],
        &get("generator.0.fc2.weight"),
        &get("generator.0.fc2.bias")[0],
        cfg.leaky_slope,
    );
    cases.push(OracleCase {
        operation: "mask".into(),
        input: json!({"x": x, "model_seed": cfg.seed}),
        expected: json!(mask),
        tolerance: 1e-12,
        provenance: "oracle_mask: two affine layers by hand".into(),
    });
    cases
}

fn check(case: &OracleCase) {
    let inp = &case.input;
    let exp = &case.expected;
    match case.operation.as_str() {
        "pa_percent_k" => {
            let y: Vec<u8> = serde_json::from_value(inp["y"].clone()).unwrap();
            let y_hat: Vec<u8> = serde_json::from_value(inp["y_hat"].clone()).unwrap();
            let k = inp["k"].as_f64().unwrap();
            let segs = segments_from_labels(&y);
            assert_eq!(json!(point_adjust(&y_hat, &segs)), exp["pa"]);
            assert_eq!(json!(pa_percent_k(&y_hat, &segs, k)), exp["pak"]);
        }
        "losses" => {
            let triplets = inp["triplets"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| Triplet {
                    anchor: serde_json::from_value(t["anchor"].clone()).unwrap(),
                    positives: vecs(&t["positives"]),
                    negatives: vecs(&t["negatives"]),
                })
                .collect();
            let margins: Vec<f64> = serde_json::from_value(inp["margins"].clone()).unwrap();
            let cfg = TrainConfig {
                lambda: inp["lambda"].as_f64().unwrap(),
                ..Default::default()
            };
            let l = total_loss(&TripletBatch { triplets }, &margins, &cfg).unwrap();
            for (got, key) in [(l.comp, "comp"), (l.sep, "sep"), (l.reg, "reg"), (l.total, "total")] {
                let want = exp[key].as_f64().unwrap();
                assert!((got - want).abs() <= case.tolerance, "{key}: {got} vs {want}");
            }
        }
        "threshold" => {
            let scores: Vec<f64> = serde_json::from_value(inp["scores"].clone()).unwrap();
            let y: Vec<u8> = serde_json::from_value(inp["y"].clone()).unwrap();
            let val: Vec<f64> = serde_json::from_value(inp["validation"].clone()).unwrap();
            let metric = match inp["metric"].as_str().unwrap() {
                "F1" => Metric::F1,
                "F1_PA50" => Metric::F1_PA50,
                _ => Metric::F1Pa,
            };
            let c = search_threshold(&scores, &y, &val, metric).unwrap();
            assert_eq!(c.threshold, exp["threshold"].as_f64().unwrap());
            assert!((c.value - exp["value"].as_f64().unwrap()).abs() <= case.tolerance);
        }
        "gat_alpha" => {
            let cfg = tiny_config();
            let mut model = LatadModel::new(&cfg, 1).unwrap();
            let a: Vec<f64> = serde_json::from_value(inp["a"].clone()).unwrap();
            let id = model.store.id("extractor.gat.attention").unwrap();
            *model.store.get_mut(id) = Array2::from_shape_vec((a.len(), 1), a).unwrap().into_shared();
            let h = vecs(&inp["h"]);
            let h = Array2::from_shape_fn((h.len(), h[0].len()), |(i, j)| h[i][j]);
            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let hv = tape.constant(h);
            let (_, alpha) = model.extractor.gat_forward(&mut tape, &p, hv).unwrap();
            let want = vecs(exp);
            for (row, wrow) in tape.value(alpha).rows().into_iter().zip(&want) {
                for (g, w) in row.iter().zip(wrow) {
                    assert!((g - w).abs() <= case.tolerance);
                }
            }
        }
        "mask" => {
            let model = LatadModel::new(&tiny_config(), 1).unwrap();
            let x = vecs(&inp["x"]);
            let x = Array2::from_shape_fn((x.len(), x[0].len()), |(i, j)| x[i][j]);
            let m = model.generators[0].generate_mask(&model.store, x.view()).unwrap();
            let want = vecs(exp);
            for (row, wrow) in m.rows().into_iter().zip(&want) {
                for (g, w) in row.iter().zip(wrow) {
                    assert!((g - w).abs() <= case.tolerance);
                }
            }
        }
        other => panic!("unknown operation {other}"),
    }
}

#[test]
fn implementations_match_frozen_oracle_cases() {
    let path = golden_file();
    if oracles::regenerate_requested() {
        oracles::write_golden(&path, &build_cases()).unwrap();
    }
    let cases = oracles::read_golden(&path).unwrap();
    assert!(!cases.is_empty());
    for case in &cases {
        check(case);
    }
}
