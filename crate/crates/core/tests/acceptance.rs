//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see the lines on success).
//!
//! Reference values are checked against independently coded oracles where
//! they are derivable, and against hand-derived fixtures elsewhere.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use annopol::agreement::{cohen_kappa, fleiss_kappa, intra_agreement_counts};
use annopol::augment::{replicate_by_polarization, AugmentPolicy, TrainInstance};
use annopol::classify::{Hyperparams, PredictionSet};
use annopol::corpus::{AnnotationFormat, AnnotationMatrix, LabelScheme};
use annopol::evalens::{evaluate, inclusive_ensemble};
use annopol::goldstd::{train_test_split, GoldStandard, SplitSpec, TiePolicy};
use annopol::partition::{search_max_polarization, Partition};
use annopol::pipeline::{full_pipeline, PartitionMode, RunConfig};
use annopol::polarization::{p_index, percentage};
use annopol::Exact;

fn check(criterion: &str, result: Result<(), String>) {
    match result {
        Ok(()) => println!("acceptance {criterion}: PASS"),
        Err(msg) => {
            println!("acceptance {criterion}: FAIL ({msg})");
            panic!("{criterion} failed: {msg}");
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// One-item binary matrix from two per-group label slices, plus the matching
/// partition's group positions.
fn one_item(g1: &[u8], g2: &[u8]) -> (AnnotationMatrix, Vec<Vec<usize>>) {
    let mut triples = Vec::new();
    let mut g1_ids = BTreeSet::new();
    let mut g2_ids = BTreeSet::new();
    for (idx, label) in g1.iter().enumerate() {
        let id = format!("a{idx}");
        triples.push(("i1".to_string(), id.clone(), label.to_string()));
        g1_ids.insert(id);
    }
    for (idx, label) in g2.iter().enumerate() {
        let id = format!("b{idx}");
        triples.push(("i1".to_string(), id.clone(), label.to_string()));
        g2_ids.insert(id);
    }
    let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
    let p = Partition::new(vec![g1_ids, g2_ids]).unwrap();
    let positions = p.group_positions(&m);
    (m, positions)
}

#[test]
fn criterion_01_polarization_worked_examples() {
    check("criterion 1 (P-index worked examples)", (|| {
        let cases: [(&[u8], &[u8], f64); 3] = [
            (&[1, 0, 0], &[1, 1, 1], 0.49),
            (&[0, 0, 0], &[1, 1, 1], 1.00),
            (&[0, 0], &[1, 0, 1], 0.53),
        ];
        for (g1, g2, expected) in cases {
            let (m, positions) = one_item(g1, g2);
            let score = p_index::<f64>(&m, 0, &positions).map_err(|e| e.to_string())?;
            ensure(
                (score.p - expected).abs() <= 0.005,
                format!("{g1:?}/{g2:?}: got {}, want {expected} +/- 0.005", score.p),
            )?;
        }
        Ok(())
    })());
}

#[test]
fn criterion_02_agreement_components() {
    check("criterion 2 (agreement components)", (|| {
        for (counts, expected) in [([2usize, 1], 0.11), ([3, 0], 1.0), ([3, 2], 0.04)] {
            let a = intra_agreement_counts::<f64>(&counts).map_err(|e| e.to_string())?;
            ensure(
                (a.value - expected).abs() <= 0.005,
                format!("counts {counts:?}: got {}, want {expected} +/- 0.005", a.value),
            )?;
        }
        Ok(())
    })());
}

/// Independent binary agreement oracle: a = ((n1 - n0) / n)^2, an algebraic
/// reduction that shares no code with the library's chi-square path.
fn oracle_agreement(n0: i64, n1: i64) -> Ratio<i64> {
    let d = Ratio::new(n1 - n0, n0 + n1);
    d * d
}

fn oracle_p(g1: (i64, i64), g2: (i64, i64)) -> Ratio<i64> {
    let a1 = oracle_agreement(g1.0, g1.1);
    let a2 = oracle_agreement(g2.0, g2.1);
    let overall = oracle_agreement(g1.0 + g2.0, g1.1 + g2.1);
    (a1 + a2) / Ratio::from_integer(2) * (Ratio::from_integer(1) - overall)
}

#[test]
fn criterion_03_oracle_equivalence() {
    check("criterion 3 (exact oracle equivalence)", (|| {
        let started = Instant::now();
        let mut cases = 0usize;
        for m in 4usize..=6 {
            for bits in 0..(1u32 << m) {
                let labels: Vec<u8> = (0..m).map(|i| ((bits >> i) & 1) as u8).collect();
                // 2-partitions of the positions, both groups >= 2; fix
                // position 0 in group 1 so each split appears once
                for mask in 0..(1u32 << m) {
                    if mask & 1 == 0 {
                        continue;
                    }
                    let size = mask.count_ones() as usize;
                    if size < 2 || m - size < 2 {
                        continue;
                    }
                    let g1: Vec<u8> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| labels[i]).collect();
                    let g2: Vec<u8> = (0..m).filter(|i| mask >> i & 1 == 0).map(|i| labels[i]).collect();
                    let count = |g: &[u8]| {
                        let n1 = g.iter().filter(|&&l| l == 1).count() as i64;
                        (g.len() as i64 - n1, n1)
                    };
                    let expected = oracle_p(count(&g1), count(&g2));
                    let (matrix, positions) = one_item(&g1, &g2);
                    let score = p_index::<Exact>(&matrix, 0, &positions).map_err(|e| e.to_string())?;
                    ensure(
                        score.p == expected,
                        format!("labels {labels:?} mask {mask:b}: {} != {expected}", score.p),
                    )?;
                    cases += 1;
                }
            }
        }
        ensure(cases > 1000, format!("only {cases} cases covered"))?;
        ensure(
            started.elapsed().as_secs() < 10,
            format!("took {:?}, budget 10 s", started.elapsed()),
        )
    })());
}

/// Random complete binary matrix over single-letter annotator ids.
fn random_matrix(rng: &mut ChaCha8Rng, annotators: usize, items: usize) -> AnnotationMatrix {
    let ids: Vec<String> = (0..annotators)
        .map(|j| ((b'a' + j as u8) as char).to_string())
        .collect();
    let triples: Vec<(String, String, String)> = (0..items)
        .flat_map(|i| {
            let ids = ids.clone();
            ids.into_iter().map(move |a| (i, a))
        })
        .map(|(i, a)| (format!("i{i:02}"), a, rng.gen_range(0..2u8).to_string()))
        .collect();
    AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap()
}

#[test]
fn criterion_04_partition_search_matches_brute_force() {
    check("criterion 4 (partition search vs brute force)", (|| {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for m in 4usize..=8 {
            for _ in 0..5 {
                let matrix = random_matrix(&mut rng, m, 6);
                let result =
                    search_max_polarization(&matrix, 2, 2, false).map_err(|e| e.to_string())?;
                // independent brute force: bitmask over annotator positions,
                // oracle scoring, explicit smallest-group-1 tie-break
                let ids = matrix.annotator_ids();
                let mut best: Option<(Ratio<i64>, Vec<Vec<String>>)> = None;
                for mask in 0u32..(1 << m) {
                    if mask & 1 == 0 {
                        continue;
                    }
                    let size = mask.count_ones() as usize;
                    if size < 2 || m - size < 2 {
                        continue;
                    }
                    let mut sum = Ratio::from_integer(0);
                    let mut defined = 0i64;
                    for item in matrix.items() {
                        let (mut c1, mut c2) = ((0i64, 0i64), (0i64, 0i64));
                        for (j, id) in ids.iter().enumerate() {
                            let Some(label) = matrix.cell(item, id) else { continue };
                            let target = if mask >> j & 1 == 1 { &mut c1 } else { &mut c2 };
                            if label == 1 {
                                target.1 += 1;
                            } else {
                                target.0 += 1;
                            }
                        }
                        sum += oracle_p(c1, c2);
                        defined += 1;
                    }
                    let avg = sum / Ratio::from_integer(defined);
                    let g1: Vec<String> = ids
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| mask >> j & 1 == 1)
                        .map(|(_, id)| id.clone())
                        .collect();
                    let g2: Vec<String> = ids
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| mask >> j & 1 == 0)
                        .map(|(_, id)| id.clone())
                        .collect();
                    let key = vec![g1, g2];
                    best = match best {
                        None => Some((avg, key)),
                        Some((b_avg, b_key)) if avg > b_avg || (avg == b_avg && key < b_key) => {
                            Some((avg, key))
                        }
                        keep => keep,
                    };
                }
                let (oracle_avg, oracle_key) = best.unwrap();
                ensure(
                    result.best.key() == oracle_key,
                    format!("m={m}: argmax {:?} != oracle {oracle_key:?}", result.best.key()),
                )?;
                let oracle_f = *oracle_avg.numer() as f64 / *oracle_avg.denom() as f64;
                ensure(
                    (result.best_avg_p - oracle_f).abs() < 1e-9,
                    format!("m={m}: score {} != oracle {oracle_f}", result.best_avg_p),
                )?;
            }
        }
        // planted clone-groups with opposed labels recover exactly, avg p = 1
        let mut triples = Vec::new();
        for i in 0..8 {
            let (a, b) = if i % 2 == 0 { ("1", "0") } else { ("0", "1") };
            for id in ["a", "b", "c"] {
                triples.push((format!("i{i}"), id.to_string(), a.to_string()));
            }
            for id in ["d", "e", "f"] {
                triples.push((format!("i{i}"), id.to_string(), b.to_string()));
            }
        }
        let planted = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let result = search_max_polarization(&planted, 2, 2, false).map_err(|e| e.to_string())?;
        ensure(
            result.best.key()
                == vec![
                    vec!["a".to_string(), "b".to_string(), "c".to_string()],
                    vec!["d".to_string(), "e".to_string(), "f".to_string()],
                ],
            "planted split not recovered",
        )?;
        ensure(
            (result.best_avg_p - 1.0).abs() < 1e-12,
            format!("planted avg p {} != 1", result.best_avg_p),
        )?;
        ensure(
            started.elapsed().as_secs() < 30,
            format!("took {:?}, budget 30 s", started.elapsed()),
        )
    })());
}

#[test]
fn criterion_05_kappa_fixtures_and_properties() {
    check("criterion 5 (kappa fixtures and properties)", (|| {
        let fleiss_fixture = AnnotationMatrix::from_triples(
            [
                ("i1", "a", "1"), ("i1", "b", "1"), ("i1", "c", "1"),
                ("i2", "a", "0"), ("i2", "b", "0"), ("i2", "c", "0"),
                ("i3", "a", "1"), ("i3", "b", "0"), ("i3", "c", "0"),
            ],
            LabelScheme::binary(),
        )
        .unwrap();
        let fk = fleiss_kappa(&fleiss_fixture, None).map_err(|e| e.to_string())?;
        ensure(
            (fk.kappa - 0.55).abs() < 1e-9,
            format!("fleiss fixture: {} != 0.55", fk.kappa),
        )?;
        let cohen_fixture = AnnotationMatrix::from_triples(
            [
                ("i1", "A", "1"), ("i1", "B", "1"),
                ("i2", "A", "1"), ("i2", "B", "0"),
                ("i3", "A", "0"), ("i3", "B", "0"),
                ("i4", "A", "0"), ("i4", "B", "0"),
            ],
            LabelScheme::binary(),
        )
        .unwrap();
        let ck = cohen_kappa(&cohen_fixture, "A", "B").map_err(|e| e.to_string())?;
        ensure((ck - 0.5).abs() < 1e-9, format!("cohen fixture: {ck} != 0.5"))?;
        // 1,000 randomized two-rater matrices: symmetry, and kappa = 1 when
        // rater B is a clone of rater A (with both classes present)
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for case in 0..1000 {
            let n = rng.gen_range(2..12usize);
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let other: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let triples: Vec<(String, String, String)> = labels
                .iter()
                .zip(&other)
                .enumerate()
                .flat_map(|(i, (a, b))| {
                    vec![
                        (format!("i{i}"), "A".to_string(), a.to_string()),
                        (format!("i{i}"), "B".to_string(), b.to_string()),
                    ]
                })
                .collect();
            let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
            match (cohen_kappa(&m, "A", "B"), cohen_kappa(&m, "B", "A")) {
                (Ok(ab), Ok(ba)) => ensure(
                    (ab - ba).abs() < 1e-12,
                    format!("case {case}: asymmetric {ab} vs {ba}"),
                )?,
                (Err(_), Err(_)) => {}
                _ => return Err(format!("case {case}: asymmetric definedness")),
            }
            if labels.contains(&0) && labels.contains(&1) {
                let triples: Vec<(String, String, String)> = labels
                    .iter()
                    .enumerate()
                    .flat_map(|(i, a)| {
                        vec![
                            (format!("i{i}"), "A".to_string(), a.to_string()),
                            (format!("i{i}"), "B".to_string(), a.to_string()),
                        ]
                    })
                    .collect();
                let clones =
                    AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
                let k = cohen_kappa(&clones, "A", "B").map_err(|e| e.to_string())?;
                ensure((k - 1.0).abs() < 1e-12, format!("case {case}: clone kappa {k}"))?;
                let fk = fleiss_kappa(&clones, None).map_err(|e| e.to_string())?;
                ensure(
                    (fk.kappa - 1.0).abs() < 1e-12,
                    format!("case {case}: clone fleiss {}", fk.kappa),
                )?;
            }
        }
        Ok(())
    })());
}

fn prediction_set(name: &str, labels: &[u8]) -> PredictionSet {
    PredictionSet {
        predictions: labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("i{i:03}"), l.to_string()))
            .collect(),
        scores: BTreeMap::new(),
        source: name.to_string(),
    }
}

#[test]
fn criterion_06_ensemble_recall_dominance() {
    check("criterion 6 (ensemble recall dominance)", (|| {
        let scheme = LabelScheme::binary();
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for case in 0..500 {
            let n = rng.gen_range(2..40usize);
            let gold_labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let a_labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let b_labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let gold = GoldStandard::from_labels(
                gold_labels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (format!("i{i:03}"), l.to_string())),
                "overall",
            );
            let a = prediction_set("a", &a_labels);
            let b = prediction_set("b", &b_labels);
            let fused = inclusive_ensemble(&[&a, &b], &scheme).map_err(|e| e.to_string())?;
            let recall = |p: &PredictionSet| -> Result<f64, String> {
                evaluate(p, &gold, &scheme)
                    .map(|m| m.recall_pos)
                    .map_err(|e| e.to_string())
            };
            let (ra, rb, rf) = (recall(&a)?, recall(&b)?, recall(&fused)?);
            ensure(
                rf >= ra && rf >= rb,
                format!("case {case}: inclusive recall {rf} < member ({ra}, {rb})"),
            )?;
        }
        Ok(())
    })());
}

#[test]
fn criterion_07_augmentation_contract() {
    check("criterion 7 (augmentation contract)", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        let items: Vec<TrainInstance> = (0..1000)
            .map(|i| TrainInstance {
                item_id: format!("i{i:04}"),
                label: (i % 2).to_string(),
                text: format!("text {i}"),
            })
            .collect();
        let scores: BTreeMap<String, f64> = items
            .iter()
            .map(|it| (it.item_id.clone(), rng.gen_range(0.0..=1.0)))
            .collect();
        let factor = rng.gen_range(1..6u32);
        let delta = rng.gen_range(0.2..=1.0f64);
        let policy = AugmentPolicy::new(factor, delta).map_err(|e| e.to_string())?;
        let out = replicate_by_polarization(&items, &scores, &policy);
        let mut seen = HashSet::new();
        for inst in &out.instances {
            seen.insert(inst.item_id.clone());
            let p = scores[&inst.item_id];
            ensure(p < delta, format!("{}: p {p} >= delta {delta} survived", inst.item_id))?;
            let expected = ((factor as f64 * (1.0 - p)).round() as usize).max(1);
            ensure(
                inst.copies == expected,
                format!("{}: copies {} != {expected}", inst.item_id, inst.copies),
            )?;
        }
        for item in &items {
            if scores[&item.item_id] >= delta {
                ensure(!seen.contains(&item.item_id), "deleted item resurfaced")?;
            }
        }
        // F = 1, delta = 1: identity on the items below the threshold
        let policy = AugmentPolicy::new(1, 1.0).map_err(|e| e.to_string())?;
        let out = replicate_by_polarization(&items, &scores, &policy);
        let expected: Vec<&TrainInstance> = items
            .iter()
            .filter(|it| scores[&it.item_id] < 1.0)
            .collect();
        ensure(out.instances.len() == expected.len(), "F=1 not a filtered identity")?;
        for (inst, want) in out.instances.iter().zip(expected) {
            ensure(
                inst.copies == 1 && inst.item_id == want.item_id,
                format!("F=1 altered {}", inst.item_id),
            )?;
        }
        Ok(())
    })());
}

/// 600-item corpus with two planted annotator camps: camp A (a1-a3) labels
/// token-x items positive, camp B (b1-b3) labels token-y items positive,
/// both reject plain items.
fn synthetic_pipeline_config(dir: &Path, out_name: &str) -> RunConfig {
    let ann_path = dir.join("annotations.csv");
    let txt_path = dir.join("texts.jsonl");
    if !ann_path.exists() {
        let mut ann = std::fs::File::create(&ann_path).unwrap();
        let mut txt = std::fs::File::create(&txt_path).unwrap();
        writeln!(ann, "item_id,annotator_id,label").unwrap();
        for i in 0..600 {
            let (token, a_label, b_label) = match i % 3 {
                0 => ("tokx", "1", "0"),
                1 => ("toky", "0", "1"),
                _ => ("plain", "0", "0"),
            };
            let id = format!("i{i:03}");
            writeln!(txt, r#"{{"id": "{id}", "text": "{token} filler w{i} pad{}"}}"#, i % 17).unwrap();
            for a in ["a1", "a2", "a3"] {
                writeln!(ann, "{id},{a},{a_label}").unwrap();
            }
            for b in ["b1", "b2", "b3"] {
                writeln!(ann, "{id},{b},{b_label}").unwrap();
            }
        }
    }
    RunConfig {
        annotations: ann_path,
        format: AnnotationFormat::LongCsv,
        texts: Some(txt_path),
        annotator_meta: None,
        scheme: LabelScheme::binary(),
        dedup: false,
        keywords: None,
        partition: PartitionMode::Search {
            k: 2,
            min_size: 2,
            allow_large: false,
        },
        // 3-3 camp ties on the planted items resolve toward detection
        tie_policy: TiePolicy::PreferPositive,
        train_fraction: 0.8,
        stratified: true,
        seed: 11,
        augment: None,
        hyperparams: Hyperparams::default(),
        output_dir: dir.join(out_name),
    }
}

#[test]
fn criterion_08_end_to_end_synthetic_pipeline() {
    check("criterion 8 (end-to-end synthetic pipeline)", (|| {
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic_pipeline_config(dir.path(), "out");
        let report = full_pipeline(&config).map_err(|e| e.to_string())?;
        // (a) planted partition recovered
        ensure(
            report.partition.key()
                == vec![
                    vec!["a1".to_string(), "a2".to_string(), "a3".to_string()],
                    vec!["b1".to_string(), "b2".to_string(), "b3".to_string()],
                ],
            format!("partition {:?} is not the planted one", report.partition.key()),
        )?;
        // (b) each group classifier strong on its own group-gold test
        for (name, metrics) in &report.group_metrics {
            ensure(
                metrics.f1_pos >= 0.9,
                format!("{name}: own-gold F1_pos {} < 0.9", metrics.f1_pos),
            )?;
        }
        // (c) inclusive recall dominates members on the union-positive gold
        let scheme = LabelScheme::binary();
        let union_gold = GoldStandard::from_labels(
            report
                .overall_gold_test
                .labels
                .keys()
                .map(|id| {
                    let positive = report
                        .group_gold_tests
                        .values()
                        .any(|g| g.labels.get(id).map(String::as_str) == Some("1"));
                    (id.clone(), if positive { "1" } else { "0" }.to_string())
                }),
            "union",
        );
        let inclusive_recall = evaluate(&report.ensemble, &union_gold, &scheme)
            .map_err(|e| e.to_string())?
            .recall_pos;
        for (name, preds) in &report.predictions {
            let member_recall = evaluate(preds, &union_gold, &scheme)
                .map_err(|e| e.to_string())?
                .recall_pos;
            ensure(
                inclusive_recall >= member_recall,
                format!("inclusive recall {inclusive_recall} < {name} recall {member_recall}"),
            )?;
        }
        ensure(
            started.elapsed().as_secs() < 60,
            format!("took {:?}, budget 60 s", started.elapsed()),
        )
    })());
}

#[test]
fn criterion_09_structural_arithmetic() {
    check("criterion 9 (structural split and percentage arithmetic)", (|| {
        let gold = GoldStandard::from_labels(
            (0..1120).map(|i| {
                (
                    format!("i{i:04}"),
                    if i < 106 { "1" } else { "0" }.to_string(),
                )
            }),
            "overall",
        );
        let spec = SplitSpec::new(0.85, 1, true).map_err(|e| e.to_string())?;
        let (train, test) = train_test_split(&gold, &spec).map_err(|e| e.to_string())?;
        ensure(
            train.len() == 952 && test.len() == 168,
            format!("split {}/{} != 952/168", train.len(), test.len()),
        )?;
        ensure(percentage(62, 1120) == 5.5, "62/1120 does not render as 5.5")?;
        ensure(percentage(40, 168) == 23.8, "40/168 does not render as 23.8")?;
        Ok(())
    })());
}

#[test]
fn criterion_10_pipeline_determinism() {
    check("criterion 10 (byte-identical repeated runs)", (|| {
        let dir = tempfile::tempdir().unwrap();
        let config1 = synthetic_pipeline_config(dir.path(), "run1");
        let config2 = synthetic_pipeline_config(dir.path(), "run2");
        let r1 = full_pipeline(&config1).map_err(|e| e.to_string())?;
        let r2 = full_pipeline(&config2).map_err(|e| e.to_string())?;
        ensure(
            r1.manifest.artifacts == r2.manifest.artifacts,
            "artifact lists differ",
        )?;
        for name in &r1.manifest.artifacts {
            let a = std::fs::read(config1.output_dir.join(name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(config2.output_dir.join(name)).map_err(|e| e.to_string())?;
            ensure(a == b, format!("artifact {name} differs between runs"))?;
        }
        Ok(())
    })());
}
