use std::collections::BTreeSet;

use proptest::prelude::*;

use docstruct::extraction::{build_plan, extract};
use docstruct::hierarchy::{build_hierarchy, Pattern};
use docstruct::pipeline::{analyze, RunConfig};
use docstruct::scoring::{adapt_map, compare_lines, count_events, FeatureScoreMap};
use docstruct::templates::{detect_templates, DetectOptions};
use docstruct::testkit::{expand_series, figure3, gen_document, oracle_score, random_spec};

fn line() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-C1-3 .,-]{0,30}").unwrap()
}

fn int_map() -> impl Strategy<Value = FeatureScoreMap> {
    proptest::array::uniform3(proptest::array::uniform5(0u8..=9)).prop_map(|rows| {
        let mut w = rows.map(|r| r.map(f64::from));
        w[1][2] = w[1][2].max(1.0);
        FeatureScoreMap::new(w).unwrap()
    })
}

proptest! {
    #[test]
    fn scale_invariance(a in line(), b in line(), m in int_map()) {
        let base = compare_lines(&a, &b, &m).unwrap();
        for k in [0.5, 2.0, 10.0] {
            prop_assert_eq!(compare_lines(&a, &b, &m.scaled(k)).unwrap(), base);
        }
    }

    #[test]
    fn trailing_spaces_ignored(a in line(), b in line(), pad in 0usize..6, m in int_map()) {
        let padded = format!("{a}{}", " ".repeat(pad));
        prop_assert_eq!(
            compare_lines(&padded, &b, &m).unwrap(),
            compare_lines(&a, &b, &m).unwrap()
        );
    }

    #[test]
    fn symmetric_under_default_map(a in line(), b in line()) {
        let m = FeatureScoreMap::default();
        prop_assert_eq!(compare_lines(&a, &b, &m).unwrap(), compare_lines(&b, &a, &m).unwrap());
    }

    #[test]
    fn matches_oracle(a in line(), b in line(), m in int_map()) {
        prop_assert_eq!(compare_lines(&a, &b, &m).unwrap(), oracle_score(&a, &b, &m).unwrap());
    }

    #[test]
    fn adapt_is_idempotent(a in line(), b in line()) {
        prop_assume!(count_events(&a, &b).total_events() > 0);
        let once = adapt_map(&a, &b, &FeatureScoreMap::default()).unwrap();
        let twice = adapt_map(&a, &b, &once).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn score_is_finite_and_non_negative(a in line(), b in line()) {
        let s = compare_lines(&a, &b, &FeatureScoreMap::default()).unwrap();
        prop_assert!(s >= 0.0 && s.is_finite());
    }
}

fn random_lines(seed: u64) -> Vec<String> {
    let spec = random_spec(seed, 1 + (seed % 3) as usize, seed % 2 == 1);
    gen_document(&spec, 80).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn templates_partition_the_sample(seed in 0u64..10_000) {
        let lines = random_lines(seed);
        let (ts, series) =
            detect_templates(&lines, &FeatureScoreMap::default(), &DetectOptions::default()).unwrap();
        let mut seen = BTreeSet::new();
        for t in &ts.templates {
            for &m in &t.members {
                prop_assert!(seen.insert(m), "line {} in two templates", m);
            }
        }
        let non_blank: BTreeSet<usize> = lines
            .iter()
            .take(DetectOptions::default().sample_size)
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(&seen, &non_blank);
        prop_assert_eq!(series.len(), non_blank.len());
    }

    #[test]
    fn threshold_separates_members(seed in 0u64..10_000) {
        let lines = random_lines(seed);
        let (ts, _) =
            detect_templates(&lines, &FeatureScoreMap::default(), &DetectOptions::default()).unwrap();
        for t in &ts.templates {
            let Some(cut) = t.threshold else { continue };
            for &(line, score) in &t.creation_scores {
                prop_assert_eq!(t.members.contains(&line), score >= cut);
            }
        }
    }

    #[test]
    fn detection_is_deterministic(seed in 0u64..10_000) {
        let lines = random_lines(seed);
        let opts = DetectOptions::default();
        let (a, sa) = detect_templates(&lines, &FeatureScoreMap::default(), &opts).unwrap();
        let (b, sb) = detect_templates(&lines, &FeatureScoreMap::default(), &opts).unwrap();
        prop_assert_eq!(sa, sb);
        prop_assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}

/// A nested pattern over distinct ids; every outer level has a header or a
/// footer.
fn pattern() -> impl Strategy<Value = Pattern> {
    (1usize..=4, proptest::collection::vec((0usize..=2, 0usize..=1), 3), 1usize..=2).prop_map(
        |(depth, levels, detail)| {
            let mut next = 0;
            let mut take = |n: usize| {
                let ids: Vec<usize> = (next..next + n).collect();
                next += n;
                ids
            };
            let mut p = Pattern::detail(take(detail));
            for &(h, f) in levels.iter().take(depth - 1) {
                let f = if h == 0 { f.max(1) } else { f };
                p = Pattern::wrap(take(h), p, take(f));
            }
            p
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pure_hierarchy_is_recovered(p in pattern(), top in 2usize..4, max_repeat in 2usize..4, seed: u64) {
        let series = expand_series(&p, top, max_repeat, seed);
        let detail = p.detail_level().header.clone();
        let h = build_hierarchy(&series, &detail).unwrap();
        prop_assert_eq!(h.primary(), Some(&p), "series {:?}", series);
        prop_assert!(h.noise_log.is_empty());
        prop_assert!(h.residue.is_empty());
    }

    #[test]
    fn hierarchy_is_idempotent(p in pattern(), top in 2usize..4, seed: u64) {
        let series = expand_series(&p, top, 3, seed);
        let detail = p.detail_level().header.clone();
        let first = build_hierarchy(&series, &detail).unwrap();
        let again = expand_series(first.primary().unwrap(), top, 3, seed ^ 1);
        let second = build_hierarchy(&again, &detail).unwrap();
        prop_assert_eq!(first.primary(), second.primary());
    }
}

#[test]
fn noise_is_removed_and_structure_kept() {
    // Noisy random documents: the primary structure survives the noise.
    let mut recovered = 0;
    for seed in 0..20u64 {
        let spec = random_spec(700 + seed, 3, true);
        let (lines, truth) = gen_document(&spec, 150).unwrap();
        let cfg = RunConfig {
            sample_lines: lines.len(),
            ..RunConfig::default()
        };
        let a = analyze(lines, &cfg).unwrap();
        let want_primary = truth.dss.split(" / ").next().unwrap().to_string();
        if a.hierarchy.primary().map(|p| p.render()) == Some(want_primary) {
            recovered += 1;
        }
    }
    assert!(recovered >= 19, "primary recovered in {recovered}/20");
}

#[test]
fn pipeline_is_deterministic() {
    let (lines, _) = figure3(400, 3).unwrap();
    let cfg = RunConfig::default();
    let a = analyze(lines.clone(), &cfg).unwrap();
    let b = analyze(lines, &cfg).unwrap();
    assert_eq!(a.dss(), b.dss());
    assert_eq!(a.templates_json(&cfg), b.templates_json(&cfg));
    assert_eq!(a.series(), b.series());
}

mod extraction {
    use super::*;

    fn figure3_records() -> (docstruct::extraction::ExtractionPlan, docstruct::extraction::Extraction, usize) {
        let (lines, truth) = figure3(400, 1).unwrap();
        let a = analyze(lines, &RunConfig::default()).unwrap();
        let plan = a.plan().unwrap();
        let ex = a.extract(&plan);
        (plan, ex, truth.records.len())
    }

    #[test]
    fn record_count_matches_planted_items() {
        let (_, ex, truth) = figure3_records();
        assert_eq!(ex.records.len(), truth);
        assert_eq!(ex.incomplete, 0);
    }

    #[test]
    fn provenance_lines_are_disjoint_detail_lines() {
        let (lines, _) = figure3(400, 1).unwrap();
        let (_, ex, _) = figure3_records();
        let mut seen = BTreeSet::new();
        for r in &ex.records {
            assert!(!r.lines.is_empty());
            for &l in &r.lines {
                assert!(l >= 1 && l <= lines.len());
                assert!(seen.insert(l), "line {l} in two records");
            }
        }
    }

    #[test]
    fn records_follow_document_order() {
        let (_, ex, _) = figure3_records();
        let firsts: Vec<usize> = ex.records.iter().map(|r| r.lines[0]).collect();
        assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn footer_values_shared_within_group() {
        let (plan, ex, _) = figure3_records();
        let footer_cols: Vec<usize> = plan
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with("L1_F"))
            .map(|(i, _)| i)
            .collect();
        assert!(!footer_cols.is_empty());
        for group in ex.records.chunk_by(|a, b| a.groups[0] == b.groups[0]) {
            for &c in &footer_cols {
                let v = &group[0].values[c];
                assert!(!v.is_empty(), "group {} lacks its footer", group[0].groups[0]);
                assert!(group.iter().all(|r| &r.values[c] == v));
            }
        }
    }

    #[test]
    fn random_documents_yield_planted_records() {
        for seed in 0..10u64 {
            let spec = random_spec(300 + seed, 1 + (seed % 4) as usize, false);
            let (lines, truth) = gen_document(&spec, 100).unwrap();
            let opts = DetectOptions {
                sample_size: lines.len(),
                ..DetectOptions::default()
            };
            let (ts, series) = detect_templates(&lines, &FeatureScoreMap::default(), &opts).unwrap();
            let h = build_hierarchy(&series.ids(), &ts.detail_ids()).unwrap();
            let plan = build_plan(&ts, &h).unwrap();
            let ex = extract(&lines, &ts, &plan);
            assert_eq!(ex.records.len(), truth.records.len(), "spec {}", spec.seed);
        }
    }
}
