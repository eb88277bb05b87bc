//! Scenario data model, JSON I/O and the synthetic scenario generator.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MotionDelta, Pose2D};
use crate::seed;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylineKind {
    LaneCenter,
    RoadEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPolyline {
    pub kind: PolylineKind,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: u32,
    pub length: f64,
    pub width: f64,
    pub poses: Vec<Pose2D>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub dt: f64,
    pub history_len: usize,
    pub horizon: usize,
    pub map: Vec<MapPolyline>,
    pub tracks: Vec<AgentTrack>,
}

impl Scenario {
    /// Number of poses every track must carry.
    pub fn track_len(&self) -> usize {
        self.history_len + self.horizon + 1
    }

    /// Track indices sorted by ascending agent id.
    pub fn track_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tracks.len()).collect();
        order.sort_by_key(|&i| self.tracks[i].agent_id);
        order
    }

    /// Lane-centre vertices in map order.
    pub fn lane_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.map
            .iter()
            .filter(|p| p.kind == PolylineKind::LaneCenter)
            .flat_map(|p| p.points.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.version != SCENARIO_FORMAT_VERSION {
            return fail(format!("unsupported scenario version {}", self.version));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if self.tracks.is_empty() {
            return fail("scenario has no tracks".into());
        }
        for (i, line) in self.map.iter().enumerate() {
            if line.points.len() < 2 {
                return fail(format!("map polyline {i} has fewer than 2 points"));
            }
            if line.points.iter().flatten().any(|v| !v.is_finite()) {
                return fail(format!("map polyline {i} has non-finite points"));
            }
            if line.points.windows(2).any(|w| w[0] == w[1]) {
                return fail(format!("map polyline {i} repeats a consecutive point"));
            }
        }
        let expected = self.track_len();
        let mut ids = HashSet::new();
        for t in &self.tracks {
            let id = t.agent_id;
            if !ids.insert(id) {
                return fail(format!("duplicate agent_id {id}"));
            }
            if !(t.length > 0.0 && t.width > 0.0) {
                return fail(format!("agent {id}: length and width must be positive"));
            }
            if t.poses.len() != t.valid.len() {
                return fail(format!(
                    "agent {id}: poses ({}) and valid ({}) lengths differ",
                    t.poses.len(),
                    t.valid.len()
                ));
            }
            if t.poses.len() != expected {
                return fail(format!(
                    "agent {id}: track spans {} poses, expected history_len + horizon + 1 = {expected}",
                    t.poses.len()
                ));
            }
            if !t.valid[0] {
                return fail(format!("agent {id}: valid[0] must be true"));
            }
            for (k, p) in t.poses.iter().enumerate() {
                if !(p.x.is_finite() && p.y.is_finite()) || !(p.yaw > -PI && p.yaw <= PI) {
                    return fail(format!(
                        "agent {id}: pose {k} is non-finite or yaw outside (-pi, pi]"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("scenario", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(format!("scenario field `{}`", e.path()), e.inner()))?;
        sc.validate()?;
        Ok(sc)
    }
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{} ({context})", path.display()),
            message,
        },
        other => other,
    })
}

/// All agent-frame deltas between consecutive valid poses.
pub fn extract_segments<'a>(scenarios: impl IntoIterator<Item = &'a Scenario>) -> Vec<MotionDelta> {
    let mut out = Vec::new();
    for sc in scenarios {
        for t in &sc.tracks {
            for k in 1..t.poses.len() {
                if t.valid[k - 1] && t.valid[k] {
                    out.push(MotionDelta::between(&t.poses[k - 1], &t.poses[k]));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Straight,
    Merge,
    UnprotectedLeft,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Straight, Template::Merge, Template::UnprotectedLeft];

    fn tag(self) -> u64 {
        match self {
            Template::Straight => 1,
            Template::Merge => 2,
            Template::UnprotectedLeft => 3,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::Straight => "straight",
            Template::Merge => "merge",
            Template::UnprotectedLeft => "unprotected_left",
        })
    }
}

impl FromStr for Template {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Template::Straight),
            "merge" => Ok(Template::Merge),
            "unprotected_left" => Ok(Template::UnprotectedLeft),
            other => Err(Error::Validation(format!("unknown template `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub dt: f64,
    pub history_len: usize,
    pub horizon: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            history_len: 11,
            horizon: 80,
        }
    }
}

pub const MAX_SYNTHETIC_AGENTS: usize = 16;

/// Whether `generate_synthetic` plants a ground-truth conflict for this call.
pub fn is_collision_prone(template: Template, n_agents: usize, seed: u64) -> bool {
    template == Template::UnprotectedLeft && n_agents >= 2 && seed % 4 == 0
}

/// Generates a synthetic scenario with the default history and horizon.
pub fn generate_synthetic(template: Template, n_agents: usize, seed: u64) -> Result<Scenario> {
    generate_synthetic_with(template, n_agents, seed, &SyntheticConfig::default())
}

pub fn generate_synthetic_with(
    template: Template,
    n_agents: usize,
    seed: u64,
    cfg: &SyntheticConfig,
) -> Result<Scenario> {
    if !(1..=MAX_SYNTHETIC_AGENTS).contains(&n_agents) {
        return Err(Error::Validation(format!(
            "n_agents must be in 1..={MAX_SYNTHETIC_AGENTS}, got {n_agents}"
        )));
    }
    if cfg.horizon < 1 || !(cfg.dt > 0.0) {
        return Err(Error::Validation("horizon >= 1 and dt > 0 required".into()));
    }
    let mut rng = seed::rng_from(&[template.tag(), n_agents as u64, seed]);
    let layout = match template {
        Template::Straight => straight_layout(n_agents, &mut rng),
        Template::Merge => merge_layout(n_agents, cfg, &mut rng),
        Template::UnprotectedLeft => left_turn_layout(n_agents, seed, cfg, &mut rng),
    };
    let steps = cfg.history_len + cfg.horizon + 1;
    let tracks = layout
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| AgentTrack {
            agent_id: i as u32,
            length: a.length,
            width: a.width,
            poses: (0..steps)
                .map(|k| {
                    let s = a.s0 + a.speed * k as f64 * cfg.dt;
                    layout.paths[a.path].pose_at(s, a.offset)
                })
                .collect(),
            valid: vec![true; steps],
        })
        .collect();
    let scenario = Scenario {
        version: SCENARIO_FORMAT_VERSION,
        dt: cfg.dt,
        history_len: cfg.history_len,
        horizon: cfg.horizon,
        map: layout.map,
        tracks,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line(f64),
    /// Signed curvature (positive turns left) and arc length.
    Arc { curvature: f64, length: f64 },
}

/// A reference route built from straight and circular pieces, parameterized by arc length.
#[derive(Debug, Clone)]
struct Route {
    start: Pose2D,
    pieces: Vec<Piece>,
}

impl Route {
    fn new(start: Pose2D) -> Self {
        Self {
            start,
            pieces: Vec::new(),
        }
    }

    fn line(mut self, len: f64) -> Self {
        self.pieces.push(Piece::Line(len));
        self
    }

    fn arc(mut self, radius: f64, angle: f64) -> Self {
        self.pieces.push(Piece::Arc {
            curvature: angle.signum() / radius,
            length: radius * angle.abs(),
        });
        self
    }

    fn length(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| match *p {
                Piece::Line(l) => l,
                Piece::Arc { length, .. } => length,
            })
            .sum()
    }

    fn advance(p: (f64, f64, f64), piece: Piece, u: f64) -> (f64, f64, f64) {
        let (x, y, h) = p;
        match piece {
            Piece::Line(_) => (x + u * h.cos(), y + u * h.sin(), h),
            Piece::Arc { curvature: k, .. } => {
                let h2 = h + k * u;
                (
                    x + (h2.sin() - h.sin()) / k,
                    y - (h2.cos() - h.cos()) / k,
                    h2,
                )
            }
        }
    }

    /// Pose at arc length `s`, shifted `offset` metres to the left of the
    /// route. Positions before the start or past the end extrapolate straight.
    fn pose_at(&self, s: f64, offset: f64) -> Pose2D {
        let mut state = (self.start.x, self.start.y, self.start.yaw);
        let mut remaining = s;
        if remaining > 0.0 {
            for &piece in &self.pieces {
                let len = match piece {
                    Piece::Line(l) => l,
                    Piece::Arc { length, .. } => length,
                };
                if remaining <= len {
                    state = Self::advance(state, piece, remaining);
                    remaining = 0.0;
                    break;
                }
                state = Self::advance(state, piece, len);
                remaining -= len;
            }
        }
        let (x, y, h) = Self::advance(state, Piece::Line(0.0), remaining);
        Pose2D::new(x - offset * h.sin(), y + offset * h.cos(), h)
    }

    fn polyline(&self, kind: PolylineKind, spacing: f64, offset: f64) -> MapPolyline {
        let len = self.length();
        let n = (len / spacing).ceil().max(1.0) as usize;
        let points = (0..=n)
            .map(|i| {
                let p = self.pose_at(len * i as f64 / n as f64, offset);
                [p.x, p.y]
            })
            .collect();
        MapPolyline { kind, points }
    }
}

struct PlacedAgent {
    path: usize,
    s0: f64,
    speed: f64,
    offset: f64,
    length: f64,
    width: f64,
}

struct Layout {
    paths: Vec<Route>,
    agents: Vec<PlacedAgent>,
    map: Vec<MapPolyline>,
}

const LANE_WIDTH: f64 = 3.5;
const MAP_SPACING: f64 = 5.0;

/// Speeds are drawn on a grid of this step (m/s).
const SPEED_STEP: f64 = 0.5;

/// Uniform over the multiples of [`SPEED_STEP`] in `[lo, hi]`.
fn grid_speed(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let a = (lo / SPEED_STEP).ceil() as i64;
    let b = (hi / SPEED_STEP).floor() as i64;
    rng.gen_range(a..=b) as f64 * SPEED_STEP
}

fn vehicle(rng: &mut impl Rng, path: usize, s0: f64, speed: f64) -> PlacedAgent {
    PlacedAgent {
        path,
        s0,
        speed,
        offset: rng.gen_range(-0.15..=0.15),
        length: rng.gen_range(4.2..=4.8),
        width: rng.gen_range(1.8..=2.0),
    }
}

fn lane_map(routes: &[Route]) -> Vec<MapPolyline> {
    let mut map: Vec<MapPolyline> = routes
        .iter()
        .map(|r| r.polyline(PolylineKind::LaneCenter, MAP_SPACING, 0.0))
        .collect();
    for r in routes {
        map.push(r.polyline(PolylineKind::RoadEdge, 4.0 * MAP_SPACING, -0.5 * LANE_WIDTH));
    }
    map
}

/// Multi-lane straight road: two lanes heading +x and one heading -x.
fn straight_layout(n: usize, rng: &mut impl Rng) -> Layout {
    let span = 400.0;
    let paths = vec![
        Route::new(Pose2D::new(-span / 2.0, 0.0, 0.0)).line(span),
        Route::new(Pose2D::new(-span / 2.0, LANE_WIDTH, 0.0)).line(span),
        Route::new(Pose2D::new(span / 2.0, -LANE_WIDTH, PI)).line(span),
    ];
    let lane_speed: Vec<f64> = (0..paths.len()).map(|_| grid_speed(rng, 8.0, 12.0)).collect();
    let mut cursor = vec![span / 2.0 - 60.0; paths.len()];
    let agents = (0..n)
        .map(|i| {
            let lane = i % paths.len();
            let s0 = cursor[lane];
            cursor[lane] -= rng.gen_range(18.0..=26.0);
            let speed = lane_speed[lane] + grid_speed(rng, -0.5, 0.5);
            vehicle(rng, lane, s0, speed)
        })
        .collect();
    Layout {
        map: lane_map(&paths),
        paths,
        agents,
    }
}

/// On-ramp S-curve joining the right lane of a two-lane road at x = 0.
/// Ramp and right-lane agents take alternating arrival slots at the junction.
fn merge_layout(n: usize, cfg: &SyntheticConfig, rng: &mut impl Rng) -> Layout {
    let theta: f64 = 0.3;
    let radius = 12.0 / (2.0 * (1.0 - theta.cos()));
    let s_curve = 2.0 * radius * theta.sin();
    let lead = 150.0;
    let ramp = Route::new(Pose2D::new(-s_curve - lead, -12.0, 0.0))
        .line(lead)
        .arc(radius, theta)
        .arc(radius, -theta)
        .line(200.0);
    let ramp_junction = lead + 2.0 * radius * theta;
    let main_start = -s_curve - lead;
    let paths = vec![
        Route::new(Pose2D::new(main_start, 0.0, 0.0)).line(400.0),
        ramp,
        Route::new(Pose2D::new(main_start, LANE_WIDTH, 0.0)).line(400.0),
    ];
    let junction = [-main_start, ramp_junction];
    let t_first = (cfg.history_len as f64 + 0.4 * cfg.horizon as f64) * cfg.dt;
    let merge_speed = grid_speed(rng, 8.0, 11.0);
    let mut slot = 0.0;
    let mut left_cursor = -main_start + 10.0;
    let agents = (0..n)
        .map(|i| {
            match i % 3 {
                lane @ (0 | 1) => {
                    let speed = merge_speed + grid_speed(rng, -0.5, 0.5);
                    let arrival = t_first + slot + rng.gen_range(-0.2..=0.2);
                    slot += 2.2;
                    vehicle(rng, lane, junction[lane] - speed * arrival, speed)
                }
                _ => {
                    let speed = grid_speed(rng, 8.0, 11.0);
                    let s0 = left_cursor;
                    left_cursor -= rng.gen_range(18.0..=26.0);
                    vehicle(rng, 2, s0, speed)
                }
            }
        })
        .collect();
    Layout {
        map: lane_map(&paths),
        paths,
        agents,
    }
}

/// Four-way intersection. Agent 0 turns left from the northbound approach;
/// agent 1 drives straight through southbound. When planted, both reach the
/// conflict point together; otherwise they are at least two seconds apart.
/// Remaining agents are leaders already clear of the intersection, driving
/// faster than anything behind them.
fn left_turn_layout(n: usize, seed: u64, cfg: &SyntheticConfig, rng: &mut impl Rng) -> Layout {
    let half = 0.5 * LANE_WIDTH;
    let radius = 10.0;
    let approach = 80.0;
    let turn_start_y = half - radius;
    let turn = Route::new(Pose2D::new(half, turn_start_y - approach, FRAC_PI_2))
        .line(approach)
        .arc(radius, FRAC_PI_2)
        .line(approach);
    let southbound = Route::new(Pose2D::new(-half, approach, -FRAC_PI_2)).line(2.0 * approach);
    let westbound_exit = Route::new(Pose2D::new(half - radius, half, PI)).line(2.0 * approach);
    let southbound_exit = Route::new(Pose2D::new(-half, -2.0 * half, -FRAC_PI_2)).line(2.0 * approach);
    let northbound = Route::new(Pose2D::new(half, -approach, FRAC_PI_2)).line(2.0 * approach);
    let eastbound = Route::new(Pose2D::new(-approach, -half, 0.0)).line(2.0 * approach);

    // conflict point: turn arc (centre (half - r, turn_start_y)) meets x = -half
    let cx = half - radius;
    let dy = (radius * radius - (-half - cx).powi(2)).sqrt();
    let phi = dy.atan2(-half - cx);
    let s_turn = approach + radius * phi;
    let conflict_y = turn_start_y + dy;
    let s_south = approach - conflict_y;

    let t_conflict = (cfg.history_len as f64 + 0.5 * cfg.horizon as f64) * cfg.dt;
    let planted = seed % 4 == 0;

    let mut agents = Vec::with_capacity(n);
    let v_turn = grid_speed(rng, 6.0, 8.0);
    let t_turn = t_conflict + rng.gen_range(-0.1..=0.1);
    agents.push(vehicle(rng, 0, s_turn - v_turn * t_turn, v_turn));
    if n >= 2 {
        let v_on = grid_speed(rng, 8.0, 11.0);
        let gap = if planted {
            rng.gen_range(-0.1..=0.1)
        } else {
            let g: f64 = rng.gen_range(2.2..=3.0);
            if rng.gen_bool(0.5) {
                g
            } else {
                -g
            }
        };
        agents.push(vehicle(rng, 1, s_south - v_on * (t_turn + gap), v_on));
    }
    let mut cursors = [20.0, 20.0];
    for i in 2..n {
        let which = i % 2;
        let speed = grid_speed(rng, 11.0, 12.0);
        let s0 = cursors[which];
        cursors[which] += rng.gen_range(18.0..=26.0);
        agents.push(vehicle(rng, 2 + which, s0, speed));
    }
    let paths = vec![turn, southbound, westbound_exit, southbound_exit];
    let map_routes = [
        paths[0].clone(),
        paths[1].clone(),
        northbound,
        eastbound,
        Route::new(Pose2D::new(approach, half, PI)).line(2.0 * approach),
    ];
    Layout {
        map: lane_map(&map_routes),
        paths,
        agents,
    }
}
