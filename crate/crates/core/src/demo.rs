//! A complete replay fixture set for a sample evasive-steering function,
//! used by the test suites and the README walkthrough.

use std::io;
use std::path::Path;

use crate::llm::{write_fixture, FinishReason};
use crate::model::{make_id, ItemDefinition, Severity, Strategy, EVENT_PREFIX};

struct DemoScenario {
    core: &'static str,
    detailed: &'static str,
    factors: &'static str,
    agent: &'static str,
}

const SCENARIOS: [DemoScenario; 10] = [
    DemoScenario {
        core: "Ego drives on an urban two-lane road while a pedestrian waits at the kerb.",
        detailed: "Ego travels at 45 km/h in the right lane. A pedestrian stands on the kerb 2 m to the right of the lane edge, 30 m ahead. Dry asphalt, daylight.",
        factors: "- road: urban; two lanes\n- objects: pedestrian on kerb\n- environment: daylight; dry",
        agent: "the pedestrian on the kerb",
    },
    DemoScenario {
        core: "Ego drives on a rural road with oncoming traffic in the adjacent lane.",
        detailed: "Ego travels at 80 km/h. An oncoming passenger car at 80 km/h is 60 m ahead in the adjacent lane. No physical separation between lanes. Dusk.",
        factors: "- road: rural; undivided\n- objects: oncoming car\n- environment: dusk",
        agent: "the oncoming car",
    },
    DemoScenario {
        core: "Ego follows a truck on a motorway with a car overtaking on the left.",
        detailed: "Ego travels at 110 km/h, 40 m behind a truck at 100 km/h. A car overtakes ego at 130 km/h in the left lane, currently alongside ego's rear axle. Light rain.",
        factors: "- road: motorway; three lanes\n- objects: truck ahead; overtaking car\n- environment: light rain",
        agent: "the overtaking car",
    },
    DemoScenario {
        core: "Ego approaches a roadworks zone with a narrowed lane.",
        detailed: "Ego travels at 60 km/h towards a zone where temporary barriers narrow the lane to 2.9 m. A worker stands behind the barrier 1 m from the lane edge.",
        factors: "- road: urban arterial\n- temporary_manipulation: roadworks; lane narrowing\n- objects: road worker; barrier",
        agent: "the road worker",
    },
    DemoScenario {
        core: "Ego passes a cyclist on a country road.",
        detailed: "Ego travels at 70 km/h and closes on a cyclist riding at 20 km/h near the right road edge. Lateral gap during passing is 1.5 m. Wet road.",
        factors: "- road: rural; narrow\n- objects: cyclist\n- environment: wet",
        agent: "the cyclist",
    },
    DemoScenario {
        core: "Ego drives through a residential street with parked cars on both sides.",
        detailed: "Ego travels at 30 km/h between rows of parked cars. A child may step out between parked cars 15 m ahead. Clear weather.",
        factors: "- road: residential\n- infrastructure: parking bays\n- objects: parked cars; child",
        agent: "the child stepping out",
    },
    DemoScenario {
        core: "Ego drives on a motorway bridge next to a guard rail.",
        detailed: "Ego travels at 120 km/h in the right lane of a bridge. The guard rail is 0.8 m from the lane edge. Crosswind gusts.",
        factors: "- road: motorway; bridge\n- infrastructure: guard rail\n- environment: crosswind",
        agent: "the guard rail",
    },
    DemoScenario {
        core: "Ego approaches a signalised intersection with crossing pedestrians.",
        detailed: "Ego travels at 40 km/h towards a green light. Pedestrians wait at the crossing on both sides, 20 m ahead. Night, street lighting.",
        factors: "- road: urban; intersection\n- infrastructure: traffic lights; pedestrian crossing\n- environment: night",
        agent: "the waiting pedestrians",
    },
    DemoScenario {
        core: "Ego drives in a tunnel with a motorcycle in the adjacent lane.",
        detailed: "Ego travels at 80 km/h in a two-lane tunnel. A motorcycle rides at 85 km/h in the left lane slightly ahead of ego. Artificial lighting.",
        factors: "- road: tunnel; two lanes\n- objects: motorcycle\n- digital_information: no satellite positioning",
        agent: "the motorcycle",
    },
    DemoScenario {
        core: "Ego drives on a snowy mountain road with a steep drop on the right.",
        detailed: "Ego travels at 50 km/h on a packed-snow road with a low barrier towards a steep slope. No other traffic.",
        factors: "- road: mountain; curved\n- environment: snow; low friction\n- infrastructure: low barrier",
        agent: "the vehicle occupants",
    },
];

/// Most scenarios [`write_demo_fixtures`] can author.
pub const MAX_DEMO_SCENARIOS: usize = SCENARIOS.len();

pub fn demo_item() -> ItemDefinition {
    ItemDefinition {
        id: "ITEM-CAEM".to_string(),
        function_name: "CAEM".to_string(),
        description: "Collision avoidance by evasive manoeuvre. When a collision with an object ahead is \
                      imminent and braking alone cannot avoid it, the function requests a lateral motion \
                      of the ego vehicle into free space next to the object."
            .to_string(),
        function_outputs: vec!["lateral motion request".to_string()],
        odd_notes: "Public roads up to 130 km/h, all lighting conditions, dry to snowy roads.".to_string(),
        driver_interaction: "The driver can override the manoeuvre by steering.".to_string(),
    }
}

/// Wrap a result body in the four required sections.
pub fn structured(background: &str, reasoning: &str, result: &str) -> String {
    format!(
        "## background\n{background}\n## assumptions\nNo safety mechanism is assumed.\n## reasoning\n{reasoning}\n## result\n{result}\n"
    )
}

fn consequence(guide_word: &str, agent: &str) -> String {
    match guide_word {
        "omission" => format!("Ego does not swerve and collides head-on with the object ahead, endangering {agent}"),
        _ => format!("Ego swerves without need and its lateral motion brings it into conflict with {agent}"),
    }
}

fn goal_text(strategy: Strategy, scenario: usize, guide_word: &str) -> String {
    let n = scenario + 1;
    match (strategy, guide_word) {
        (Strategy::AvoidFailureMode, "omission") => {
            format!("CAEM shall request lateral motion whenever an evasive manoeuvre is required in situation {n}")
        }
        (Strategy::AvoidFailureMode, _) => {
            format!("CAEM shall not request lateral motion unless a collision ahead is imminent in situation {n}")
        }
        (Strategy::RestrictExposure, _) => format!("CAEM shall be inactive outside its operating conditions in situation {n}"),
        (Strategy::ImproveControllability, _) => {
            format!("CAEM shall allow the driver to override any lateral motion request in situation {n}")
        }
        (Strategy::ReduceSeverity, _) => {
            format!("CAEM shall limit the lateral acceleration of an evasive manoeuvre in situation {n}")
        }
    }
}

/// Write fixtures for `scenarios` scenarios of the demo item crossed with
/// the two default guide words. `severities` is indexed by row in table
/// order; rows past its end get S0.
pub fn write_demo_fixtures(dir: &Path, scenarios: usize, severities: &[Severity]) -> io::Result<()> {
    assert!((1..=MAX_DEMO_SCENARIOS).contains(&scenarios), "1..={MAX_DEMO_SCENARIOS} scenarios");
    std::fs::create_dir_all(dir)?;
    let ok = |name: String, body: String| write_fixture(&dir.join(name), &body, FinishReason::Stop);

    let blocks: String = SCENARIOS[..scenarios]
        .iter()
        .map(|s| format!("### SCENARIO\nCore: {}\nDetailed: {}\nFactors:\n{}\n", s.core, s.detailed, s.factors))
        .collect();
    ok(
        "scenarios.default.json".into(),
        structured("The function acts in traffic with other road users.", "Scenarios vary road type and agents.", &blocks),
    )?;

    let guide_words = ["omission", "commission"];
    let malfunctions = [
        "CAEM does not request lateral motion although an evasive manoeuvre is needed to avoid a collision ahead.",
        "CAEM requests lateral motion although no collision ahead is imminent.",
    ];
    for (i, text) in malfunctions.iter().enumerate() {
        ok(
            format!("malfunctions.MF-{:04}.json", i + 1),
            structured("The output steers the vehicle.", "Guide word applied to the output.", text),
        )?;
    }

    let mut row = 0;
    for (si, s) in SCENARIOS[..scenarios].iter().enumerate() {
        for gw in guide_words {
            let id = make_id(EVENT_PREFIX, row);
            let severity = severities.get(row).copied().unwrap_or(Severity::S0);
            ok(
                format!("hazardous_event.{id}.json"),
                structured(
                    s.detailed,
                    "The malfunction changes the ego trajectory.",
                    &format!(
                        "Consequence: {}\nKinematics: closing speed as in the detailed scenario",
                        consequence(gw, s.agent)
                    ),
                ),
            )?;
            ok(
                format!("severity.{id}.json"),
                structured(
                    "Impact speed follows from the scenario speeds.",
                    "Injury risk estimated for the most vulnerable person involved.",
                    &format!("Severity: {severity}\nRationale: expected injuries for {} give {severity}", s.agent),
                ),
            )?;
            for strategy in Strategy::ALL {
                ok(
                    format!("safety_goal.{id}.{}.json", strategy.as_str()),
                    structured(
                        strategy.title(),
                        "The goal states what must be achieved.",
                        &format!("Safety goal: {}", goal_text(strategy, si, gw)),
                    ),
                )?;
            }
            row += 1;
        }
    }
    Ok(())
}
