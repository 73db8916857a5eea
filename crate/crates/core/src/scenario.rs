//! Plain-text scenario files.
//!
//! The format is line-oriented with `[section]` headers and `key = value`
//! rows. Sections: `[road]`, `[ego]`, `[chassis]`, repeated `[obstacle]`,
//! repeated `[adhesion]`, repeated `[v2x]`, `[sim]`, and optional
//! `[planner]`. Unknown sections or keys are rejected with the offending
//! line number; all semantic invariants are checked after parsing.
//!
//! ```text
//! [road]
//! lane_marks = 0, 3.5
//! y_min = -1.75
//! y_max = 5.25
//! ...
//! [obstacle]
//! kind = static
//! x = 80
//! ...
//! ```

use crate::apf_planner::{ObstacleDesc, PlannerWeights, RoadDesc};
use crate::num::Real;
use crate::sim_engine::{
    ControllerChoice, EgoInit, MuStep, PedestrianProfile, ScenarioSpec, V2xEvent, WorldObstacle,
};
use crate::traffic_idm::{IdmParams, LongitudinalState};
use crate::vehicle_model::ChassisParams;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scenario validation error: {0}")]
    Validation(String),
    #[error("scenario io error: {0}")]
    Io(#[from] std::io::Error),
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Parse {
        line,
        msg: msg.into(),
    })
}

#[derive(Default)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

struct KeyReader {
    map: HashMap<String, (usize, String)>,
    section: String,
}

impl KeyReader {
    fn new(sec: &Section, allowed: &[&str]) -> Result<Self, ScenarioError> {
        let mut map = HashMap::new();
        for (line, k, v) in &sec.entries {
            if !allowed.contains(&k.as_str()) {
                return perr(*line, format!("unknown key '{k}' in [{}]", sec.name));
            }
            if map.insert(k.clone(), (*line, v.clone())).is_some() {
                return perr(*line, format!("duplicate key '{k}' in [{}]", sec.name));
            }
        }
        Ok(Self {
            map,
            section: sec.name.clone(),
        })
    }

    fn take_f64(&mut self, key: &str) -> Result<f64, ScenarioError> {
        let (line, v) = self
            .map
            .remove(key)
            .ok_or_else(|| ScenarioError::Parse {
                line: 0,
                msg: format!("missing key '{key}' in [{}]", self.section),
            })?;
        v.parse::<f64>()
            .map_err(|e| ScenarioError::Parse {
                line,
                msg: format!("bad number for '{key}': {e}"),
            })
    }

    fn take_f64_or(&mut self, key: &str, default: f64) -> Result<f64, ScenarioError> {
        match self.map.remove(key) {
            Some((line, v)) => v.parse::<f64>().map_err(|e| ScenarioError::Parse {
                line,
                msg: format!("bad number for '{key}': {e}"),
            }),
            None => Ok(default),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<usize, ScenarioError> {
        let (line, v) = self
            .map
            .remove(key)
            .ok_or_else(|| ScenarioError::Parse {
                line: 0,
                msg: format!("missing key '{key}' in [{}]", self.section),
            })?;
        v.parse::<usize>().map_err(|e| ScenarioError::Parse {
            line,
            msg: format!("bad integer for '{key}': {e}"),
        })
    }

    fn take_str(&mut self, key: &str) -> Result<(usize, String), ScenarioError> {
        self.map.remove(key).ok_or_else(|| ScenarioError::Parse {
            line: 0,
            msg: format!("missing key '{key}' in [{}]", self.section),
        })
    }

    fn take_list(&mut self, key: &str) -> Result<Vec<f64>, ScenarioError> {
        let (line, v) = self.take_str(key)?;
        v.split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|e| ScenarioError::Parse {
                    line,
                    msg: format!("bad list entry for '{key}': {e}"),
                })
            })
            .collect()
    }

}

fn split_sections(text: &str) -> Result<Vec<Section>, ScenarioError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or(ScenarioError::Parse {
                    line: line_no,
                    msg: "unterminated section header".to_string(),
                })?
                .trim()
                .to_string();
            sections.push(Section {
                name,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return perr(line_no, "expected 'key = value'");
        };
        let Some(section) = sections.last_mut() else {
            return perr(line_no, "key before any [section]");
        };
        section
            .entries
            .push((line_no, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(sections)
}

/// Parses a scenario from text. Every invariant of the resulting spec is
/// validated; violations are reported with the invariant spelled out.
pub fn parse_scenario(text: &str, name: &str) -> Result<ScenarioSpec<f64>, ScenarioError> {
    let sections = split_sections(text)?;

    let mut road: Option<RoadDesc<f64>> = None;
    let mut ego: Option<EgoInit<f64>> = None;
    let mut chassis = ChassisParams::<f64>::default_sedan();
    let mut kappa = 1.3f64;
    let mut obstacles: Vec<WorldObstacle<f64>> = Vec::new();
    let mut adhesion: Vec<MuStep<f64>> = Vec::new();
    let mut v2x: Vec<V2xEvent<f64>> = Vec::new();
    let mut sim: Option<(f64, f64, u64, ControllerChoice)> = None;
    let mut planner = PlannerWeights::<f64>::default_weights();

    for sec in &sections {
        let allowed: &[&str] = match sec.name.as_str() {
            "road" => &["lane_marks", "lane_dist", "y_min", "y_max", "amp_lane", "road_gain", "safety_eps"],
            "ego" => &["x", "y", "psi", "v_x"],
            "chassis" => &["m", "i_z", "l_f", "l_r", "c_f", "c_r", "kappa"],
            "obstacle" => &[
                "kind", "x", "y", "speed", "length", "width", "amp", "shape_c", "v", "v_des",
                "a_max", "b_comf", "delta_exp", "s0", "t_gap", "entry_time", "target_y", "accel",
                "cruise", "decel",
            ],
            "adhesion" => &["t", "mu"],
            "v2x" => &["t", "obstacle"],
            "sim" => &["duration", "ts", "seed", "controller"],
            "planner" => &["q", "r", "s", "n", "ts_plan"],
            other => return perr(sec.line, format!("unknown section '[{other}]'")),
        };
        let mut r = KeyReader::new(sec, allowed)?;
        match sec.name.as_str() {
            "road" => {
                road = Some(RoadDesc {
                    lane_marks: r.take_list("lane_marks")?,
                    lane_dist: r.take_f64("lane_dist")?,
                    y_road_min: r.take_f64("y_min")?,
                    y_road_max: r.take_f64("y_max")?,
                    amp_lane: r.take_f64("amp_lane")?,
                    road_gain: r.take_f64("road_gain")?,
                    safety_eps: r.take_f64("safety_eps")?,
                });
            }
            "ego" => {
                ego = Some(EgoInit {
                    x: r.take_f64("x")?,
                    y: r.take_f64("y")?,
                    psi: r.take_f64("psi")?,
                    v_x: r.take_f64("v_x")?,
                });
            }
            "chassis" => {
                chassis.m = r.take_f64_or("m", chassis.m)?;
                chassis.i_z = r.take_f64_or("i_z", chassis.i_z)?;
                chassis.l_f = r.take_f64_or("l_f", chassis.l_f)?;
                chassis.l_r = r.take_f64_or("l_r", chassis.l_r)?;
                chassis.c_f = r.take_f64_or("c_f", chassis.c_f)?;
                chassis.c_r = r.take_f64_or("c_r", chassis.c_r)?;
                kappa = r.take_f64_or("kappa", kappa)?;
            }
            "obstacle" => {
                let (line, kind) = r.take_str("kind")?;
                match kind.as_str() {
                    "static" => {
                        obstacles.push(WorldObstacle::Static(ObstacleDesc {
                            x_obs: r.take_f64("x")?,
                            y_obs: r.take_f64("y")?,
                            x_dot_obs: r.take_f64_or("speed", 0.0)?,
                            length_obs: r.take_f64("length")?,
                            width_obs: r.take_f64("width")?,
                            amp: r.take_f64("amp")?,
                            shape_c: r.take_f64_or("shape_c", 1.0)?,
                        }));
                    }
                    "idm" => {
                        obstacles.push(WorldObstacle::IdmVehicle {
                            lane_y: r.take_f64("y")?,
                            initial: LongitudinalState {
                                x: r.take_f64("x")?,
                                v: r.take_f64("v")?,
                            },
                            params: IdmParams {
                                a_max: r.take_f64_or("a_max", 1.5)?,
                                b_comf: r.take_f64_or("b_comf", 2.0)?,
                                v_des: r.take_f64("v_des")?,
                                delta_exp: r.take_f64_or("delta_exp", 4.0)?,
                                s0: r.take_f64_or("s0", 2.0)?,
                                t_gap: r.take_f64_or("t_gap", 1.5)?,
                                length: r.take_f64_or("length", 5.0)?,
                            },
                            width: r.take_f64_or("width", 2.0)?,
                            amp: r.take_f64("amp")?,
                            shape_c: r.take_f64_or("shape_c", 1.0)?,
                        });
                    }
                    "pedestrian" => {
                        obstacles.push(WorldObstacle::Pedestrian(PedestrianProfile {
                            entry_time: r.take_f64("entry_time")?,
                            x: r.take_f64("x")?,
                            start_y: r.take_f64("y")?,
                            target_y: r.take_f64("target_y")?,
                            accel: r.take_f64_or("accel", 1.0)?,
                            cruise: r.take_f64_or("cruise", 1.5)?,
                            decel: r.take_f64_or("decel", 1.0)?,
                            width: r.take_f64_or("width", 0.6)?,
                            length: r.take_f64_or("length", 0.6)?,
                            amp: r.take_f64("amp")?,
                            shape_c: r.take_f64_or("shape_c", 1.0)?,
                        }));
                    }
                    other => return perr(line, format!("unknown obstacle kind '{other}'")),
                }
                if let Some((k, (l, _))) = r.map.iter().next() {
                    return perr(*l, format!("key '{k}' does not belong to this obstacle kind"));
                }
            }
            "adhesion" => {
                adhesion.push(MuStep {
                    time: r.take_f64("t")?,
                    mu: r.take_f64("mu")?,
                });
            }
            "v2x" => {
                v2x.push(V2xEvent {
                    time: r.take_f64("t")?,
                    obstacle: r.take_usize("obstacle")?,
                });
            }
            "sim" => {
                let duration = r.take_f64("duration")?;
                let ts = r.take_f64("ts")?;
                let seed = r.take_usize("seed")? as u64;
                let (line, ctrl) = r.take_str("controller")?;
                let controller = ControllerChoice::parse(&ctrl)
                    .ok_or(ScenarioError::Parse {
                        line,
                        msg: format!("unknown controller '{ctrl}'"),
                    })?;
                sim = Some((duration, ts, seed, controller));
            }
            "planner" => {
                planner.q_traj = r.take_f64_or("q", planner.q_traj)?;
                planner.r_traj = r.take_f64_or("r", planner.r_traj)?;
                planner.s_traj = r.take_f64_or("s", planner.s_traj)?;
                if let Ok(n) = r.take_usize("n") {
                    planner.n_traj = n;
                }
                planner.ts_plan = r.take_f64_or("ts_plan", planner.ts_plan)?;
            }
            _ => unreachable!("section names are screened above"),
        }
    }

    let road = road.ok_or(ScenarioError::Validation("missing [road] section".to_string()))?;
    let ego = ego.ok_or(ScenarioError::Validation("missing [ego] section".to_string()))?;
    let (duration, ts, seed, controller) =
        sim.ok_or(ScenarioError::Validation("missing [sim] section".to_string()))?;
    chassis.v_x = ego.v_x;

    let spec = ScenarioSpec {
        name: name.to_string(),
        road,
        ego,
        chassis,
        kappa,
        obstacles,
        adhesion,
        v2x_events: v2x,
        duration,
        ts,
        seed,
        controller,
        planner,
    };
    spec.validate()
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
    Ok(spec)
}

/// Loads and validates a scenario file; the stem becomes the name.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec<f64>, ScenarioError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string();
    parse_scenario(&std::fs::read_to_string(path)?, &name)
}

/// Renders a spec back into the file format (used to generate the
/// bundled fixtures and in round-trip tests).
pub fn write_scenario<T: Real>(spec: &ScenarioSpec<T>) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let f = |v: T| format!("{}", v.as_f64());
    let _ = writeln!(s, "[road]");
    let marks: Vec<String> = spec.road.lane_marks.iter().map(|m| f(*m)).collect();
    let _ = writeln!(s, "lane_marks = {}", marks.join(", "));
    let _ = writeln!(s, "lane_dist = {}", f(spec.road.lane_dist));
    let _ = writeln!(s, "y_min = {}", f(spec.road.y_road_min));
    let _ = writeln!(s, "y_max = {}", f(spec.road.y_road_max));
    let _ = writeln!(s, "amp_lane = {}", f(spec.road.amp_lane));
    let _ = writeln!(s, "road_gain = {}", f(spec.road.road_gain));
    let _ = writeln!(s, "safety_eps = {}", f(spec.road.safety_eps));
    let _ = writeln!(s, "\n[ego]");
    let _ = writeln!(s, "x = {}", f(spec.ego.x));
    let _ = writeln!(s, "y = {}", f(spec.ego.y));
    let _ = writeln!(s, "psi = {}", f(spec.ego.psi));
    let _ = writeln!(s, "v_x = {}", f(spec.ego.v_x));
    let _ = writeln!(s, "\n[chassis]");
    let _ = writeln!(s, "m = {}", f(spec.chassis.m));
    let _ = writeln!(s, "i_z = {}", f(spec.chassis.i_z));
    let _ = writeln!(s, "l_f = {}", f(spec.chassis.l_f));
    let _ = writeln!(s, "l_r = {}", f(spec.chassis.l_r));
    let _ = writeln!(s, "c_f = {}", f(spec.chassis.c_f));
    let _ = writeln!(s, "c_r = {}", f(spec.chassis.c_r));
    let _ = writeln!(s, "kappa = {}", f(spec.kappa));
    for ob in &spec.obstacles {
        let _ = writeln!(s, "\n[obstacle]");
        match ob {
            WorldObstacle::Static(d) => {
                let _ = writeln!(s, "kind = static");
                let _ = writeln!(s, "x = {}", f(d.x_obs));
                let _ = writeln!(s, "y = {}", f(d.y_obs));
                let _ = writeln!(s, "speed = {}", f(d.x_dot_obs));
                let _ = writeln!(s, "length = {}", f(d.length_obs));
                let _ = writeln!(s, "width = {}", f(d.width_obs));
                let _ = writeln!(s, "amp = {}", f(d.amp));
                let _ = writeln!(s, "shape_c = {}", f(d.shape_c));
            }
            WorldObstacle::IdmVehicle {
                lane_y,
                initial,
                params,
                width,
                amp,
                shape_c,
            } => {
                let _ = writeln!(s, "kind = idm");
                let _ = writeln!(s, "x = {}", f(initial.x));
                let _ = writeln!(s, "y = {}", f(*lane_y));
                let _ = writeln!(s, "v = {}", f(initial.v));
                let _ = writeln!(s, "v_des = {}", f(params.v_des));
                let _ = writeln!(s, "a_max = {}", f(params.a_max));
                let _ = writeln!(s, "b_comf = {}", f(params.b_comf));
                let _ = writeln!(s, "delta_exp = {}", f(params.delta_exp));
                let _ = writeln!(s, "s0 = {}", f(params.s0));
                let _ = writeln!(s, "t_gap = {}", f(params.t_gap));
                let _ = writeln!(s, "length = {}", f(params.length));
                let _ = writeln!(s, "width = {}", f(*width));
                let _ = writeln!(s, "amp = {}", f(*amp));
                let _ = writeln!(s, "shape_c = {}", f(*shape_c));
            }
            WorldObstacle::Pedestrian(p) => {
                let _ = writeln!(s, "kind = pedestrian");
                let _ = writeln!(s, "entry_time = {}", f(p.entry_time));
                let _ = writeln!(s, "x = {}", f(p.x));
                let _ = writeln!(s, "y = {}", f(p.start_y));
                let _ = writeln!(s, "target_y = {}", f(p.target_y));
                let _ = writeln!(s, "accel = {}", f(p.accel));
                let _ = writeln!(s, "cruise = {}", f(p.cruise));
                let _ = writeln!(s, "decel = {}", f(p.decel));
                let _ = writeln!(s, "width = {}", f(p.width));
                let _ = writeln!(s, "length = {}", f(p.length));
                let _ = writeln!(s, "amp = {}", f(p.amp));
                let _ = writeln!(s, "shape_c = {}", f(p.shape_c));
            }
        }
    }
    for step in &spec.adhesion {
        let _ = writeln!(s, "\n[adhesion]");
        let _ = writeln!(s, "t = {}", f(step.time));
        let _ = writeln!(s, "mu = {}", f(step.mu));
    }
    for ev in &spec.v2x_events {
        let _ = writeln!(s, "\n[v2x]");
        let _ = writeln!(s, "t = {}", f(ev.time));
        let _ = writeln!(s, "obstacle = {}", ev.obstacle);
    }
    let _ = writeln!(s, "\n[planner]");
    let _ = writeln!(s, "q = {}", f(spec.planner.q_traj));
    let _ = writeln!(s, "r = {}", f(spec.planner.r_traj));
    let _ = writeln!(s, "s = {}", f(spec.planner.s_traj));
    let _ = writeln!(s, "n = {}", spec.planner.n_traj);
    let _ = writeln!(s, "ts_plan = {}", f(spec.planner.ts_plan));
    let _ = writeln!(s, "\n[sim]");
    let _ = writeln!(s, "duration = {}", f(spec.duration));
    let _ = writeln!(s, "ts = {}", f(spec.ts));
    let _ = writeln!(s, "seed = {}", spec.seed);
    let _ = writeln!(s, "controller = {}", spec.controller.as_str());
    s
}
