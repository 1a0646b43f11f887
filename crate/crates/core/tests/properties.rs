use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use hara_core::model::{
    EventState, HazardousEvent, Malfunction, MalfunctionSource, OperationalScenario, ScenarioLayer, ScenarioSource,
    Severity,
};
use hara_core::pipeline::{combine, gate_for_goals, greedy_select};
use hara_core::quality::aggregate_scores;

fn scenario(i: usize, factors: BTreeMap<ScenarioLayer, Vec<String>>) -> OperationalScenario {
    OperationalScenario {
        id: format!("SC-{:04}", i + 1),
        core_summary: format!("scenario {i}"),
        detailed_description: String::new(),
        factors,
        cluster_id: None,
        source: ScenarioSource::LlmGenerated,
    }
}

fn malfunction(i: usize) -> Malfunction {
    Malfunction {
        id: format!("MF-{:04}", i + 1),
        output_ref: 0,
        guide_word: "commission".into(),
        description: format!("m{i}"),
        source: MalfunctionSource::RuleEnumerated,
    }
}

fn arb_factors() -> impl Strategy<Value = BTreeMap<ScenarioLayer, Vec<String>>> {
    prop::collection::btree_map(
        prop::sample::select(ScenarioLayer::ALL.to_vec()),
        prop::collection::vec(prop::sample::select(vec!["wet", "dry", "urban", "rural", "night", "truck"]), 0..3)
            .prop_map(|v| v.into_iter().map(String::from).collect()),
        0..4,
    )
}

fn arb_row() -> impl Strategy<Value = (Option<Severity>, EventState)> {
    (
        prop::option::of(prop::sample::select(Severity::ALL.to_vec())),
        prop::sample::select(vec![EventState::Draft, EventState::Formulated, EventState::Assessed, EventState::Failed]),
    )
}

fn coverage(scenarios: &[OperationalScenario], ids: &[&String]) -> usize {
    scenarios
        .iter()
        .filter(|s| ids.contains(&&s.id))
        .flat_map(|s| s.factor_set())
        .collect::<BTreeSet<_>>()
        .len()
}

proptest! {
    #[test]
    fn combine_is_a_full_scenario_major_product(m in 1usize..9, n in 1usize..9) {
        let s: Vec<_> = (0..m).map(|i| scenario(i, BTreeMap::new())).collect();
        let f: Vec<_> = (0..n).map(malfunction).collect();
        let rows = combine(&s, &f).unwrap();
        prop_assert_eq!(rows.len(), m * n);
        let pairs: BTreeSet<(String, String)> =
            rows.iter().map(|r| (r.scenario_ref.clone(), r.malfunction_ref.clone())).collect();
        prop_assert_eq!(pairs.len(), m * n);
        let ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(&sorted, &ids);
        prop_assert_eq!(ids[0], "HE-0001");
    }

    #[test]
    fn gate_selects_exactly_assessed_rows_above_s0(rows in prop::collection::vec(arb_row(), 0..30)) {
        let events: Vec<HazardousEvent> = rows
            .iter()
            .enumerate()
            .map(|(i, (sev, state))| HazardousEvent {
                severity: *sev,
                state: *state,
                ..HazardousEvent::draft(format!("HE-{:04}", i + 1), "SC-0001".into(), "MF-0001".into())
            })
            .collect();
        let expected: Vec<String> = events
            .iter()
            .filter(|e| e.state == EventState::Assessed && e.severity.is_some_and(|s| s != Severity::S0))
            .map(|e| e.id.clone())
            .collect();
        prop_assert_eq!(gate_for_goals(&events), expected);
    }

    #[test]
    fn scores_are_bounded_and_order_free(mut raw in prop::collection::vec(1u8..=5, 1..30), seed in any::<u64>()) {
        let threes = raw.iter().filter(|&&v| v == 3).count();
        match aggregate_scores('c', &raw) {
            Ok(a) => {
                prop_assert!((1.0..=4.0).contains(&a.mean));
                prop_assert!(a.stddev >= 0.0 && a.stddev <= 1.5);
                prop_assert_eq!(a.n_excluded, threes);
                prop_assert_eq!(a.n_used + a.n_excluded, raw.len());
                let k = raw.len();
                raw.rotate_left((seed as usize) % k);
                let b = aggregate_scores('c', &raw).unwrap();
                prop_assert!((a.mean - b.mean).abs() < 1e-12 && (a.stddev - b.stddev).abs() < 1e-12);
            }
            Err(_) => prop_assert_eq!(threes, raw.len()),
        }
    }

    #[test]
    fn greedy_selection_is_ordered_and_near_optimal(
        factors in prop::collection::vec(arb_factors(), 1..8),
        k in 1usize..8,
    ) {
        let scenarios: Vec<_> = factors.into_iter().enumerate().map(|(i, f)| scenario(i, f)).collect();
        let chosen = greedy_select(&scenarios, k);
        prop_assert_eq!(chosen.len(), k.min(scenarios.len()));
        let positions: Vec<usize> =
            chosen.iter().map(|id| scenarios.iter().position(|s| &s.id == id).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));

        // brute-force optimum over all subsets of the same size
        let n = scenarios.len();
        let size = chosen.len();
        let best = (0u32..1 << n)
            .filter(|mask| mask.count_ones() as usize == size)
            .map(|mask| {
                let ids: Vec<&String> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &scenarios[i].id).collect();
                coverage(&scenarios, &ids)
            })
            .max()
            .unwrap();
        let got = coverage(&scenarios, &chosen.iter().collect::<Vec<_>>());
        prop_assert!(got as f64 >= (1.0 - (-1.0f64).exp()) * best as f64, "greedy {got} vs optimum {best}");
    }
}
