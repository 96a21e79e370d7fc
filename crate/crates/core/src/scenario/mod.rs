//! Initial scenarios: sampling with a density-dependent speed/gap structure,
//! density classification and persistence.

pub mod gmm;

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road::{project, RoadGeometry};
use crate::types::{Lane, StyleLabel, VehicleState};

pub use gmm::{fit_gmm, GmmConfig, GmmFit, GmmModel};

/// Minimum bumper-to-bumper gap between consecutive main-lane vehicles.
pub const MIN_INITIAL_GAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DensityClass {
    #[serde(rename = "highly")]
    HighlyDense,
    #[serde(rename = "medium")]
    MediumDense,
    #[serde(rename = "lower")]
    LowerDense,
}

impl DensityClass {
    /// Ordered from the smallest to the largest mean gap.
    pub const ALL: [DensityClass; 3] = [
        DensityClass::HighlyDense,
        DensityClass::MediumDense,
        DensityClass::LowerDense,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DensityClass::HighlyDense => "highly",
            DensityClass::MediumDense => "medium",
            DensityClass::LowerDense => "lower",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DensityClass::HighlyDense => "Highly Dense",
            DensityClass::MediumDense => "Medium Dense",
            DensityClass::LowerDense => "Lower Dense",
        }
    }
}

impl std::str::FromStr for DensityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "highly" | "high" | "highly-dense" => Ok(DensityClass::HighlyDense),
            "medium" | "medium-dense" => Ok(DensityClass::MediumDense),
            "lower" | "low" | "lower-dense" => Ok(DensityClass::LowerDense),
            other => Err(Error::validation(format!("unknown density class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub density: DensityClass,
    pub road: RoadGeometry,
    pub ego: VehicleState,
    /// Ordered front to back.
    pub main_vehicles: Vec<VehicleState>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.ego.validate()?;
        if self.ego.lane != Lane::Merge {
            return Err(Error::validation("ego must start on the merge lane"));
        }
        if self.ego.x >= self.road.merge_end_x {
            return Err(Error::validation("ego must start before the end of the merge lane"));
        }
        for v in &self.main_vehicles {
            v.validate()?;
        }
        for (i, w) in self.main_vehicles.windows(2).enumerate() {
            let gap = w[0].x - w[1].x - 0.5 * (w[0].length + w[1].length);
            if !(gap > MIN_INITIAL_GAP) {
                return Err(Error::validation(format!(
                    "main vehicles {i} and {} are not ordered with a gap above {MIN_INITIAL_GAP} m (gap {gap:.3})",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Gap and speed distribution of one density class. Per-vehicle speed is
/// `speed_mean / gap_mean * gap + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub speed_mean: f64,
    pub gap_mean: f64,
    /// Spread of the scenario-level mean gap around `gap_mean`.
    pub scene_gap_sd: f64,
    /// Spread of individual gaps around the scenario mean.
    pub gap_sd: f64,
    pub speed_noise_sd: f64,
}

impl ClassParams {
    pub fn slope(&self) -> f64 {
        self.speed_mean / self.gap_mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    pub highly: ClassParams,
    pub medium: ClassParams,
    pub lower: ClassParams,
    /// Offensive, Friendly, Long.
    pub style_probs: [f64; 3],
    pub ego_x: f64,
    pub ego_speed: f64,
    pub road: RoadGeometry,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let class = |speed_mean, gap_mean| ClassParams {
            speed_mean,
            gap_mean,
            scene_gap_sd: 0.35,
            gap_sd: 0.8,
            speed_noise_sd: 0.25,
        };
        ScenarioParams {
            min_vehicles: 8,
            max_vehicles: 12,
            highly: class(1.5, 2.5),
            medium: class(2.5, 4.5),
            lower: class(3.5, 7.0),
            style_probs: [0.4, 0.4, 0.2],
            ego_x: 30.0,
            ego_speed: 3.0,
            road: RoadGeometry::default(),
        }
    }
}

impl ScenarioParams {
    pub fn class(&self, d: DensityClass) -> &ClassParams {
        match d {
            DensityClass::HighlyDense => &self.highly,
            DensityClass::MediumDense => &self.medium,
            DensityClass::LowerDense => &self.lower,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_vehicles == 0 || self.min_vehicles > self.max_vehicles {
            return Err(Error::validation("vehicle count range must satisfy 1 <= min <= max"));
        }
        for d in DensityClass::ALL {
            let c = self.class(d);
            if !(c.gap_mean > 0.0) || !(c.speed_mean >= 0.0) {
                return Err(Error::validation(format!(
                    "{} class needs a positive gap mean and non-negative speed",
                    d.as_str()
                )));
            }
            if c.gap_sd < 0.0 || c.scene_gap_sd < 0.0 || c.speed_noise_sd < 0.0 {
                return Err(Error::validation(format!("{} class has a negative spread", d.as_str())));
            }
        }
        let s: f64 = self.style_probs.iter().sum();
        if self.style_probs.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::validation("style probabilities must form a simplex"));
        }
        self.road.validate()?;
        if self.ego_x >= self.road.merge_end_x {
            return Err(Error::validation("ego_x must lie before merge_end_x"));
        }
        Ok(())
    }
}

fn draw_style(rng: &mut ChaCha8Rng, probs: &[f64; 3]) -> StyleLabel {
    let u: f64 = rng.random();
    if u < probs[0] {
        StyleLabel::Offensive
    } else if u < probs[0] + probs[1] {
        StyleLabel::Friendly
    } else {
        StyleLabel::Long
    }
}

/// Draws a scenario of the requested density; fully determined by
/// `(seed, density, params)`.
pub fn sample_scenario(seed: u64, density: DensityClass, params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let c = params.class(density);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(params.min_vehicles..=params.max_vehicles);

    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::validation(e.to_string()))?;
    let scene_shift = (c.scene_gap_sd * unit.sample(&mut rng)).clamp(-2.0 * c.scene_gap_sd, 2.0 * c.scene_gap_sd);
    let scene_gap = (c.gap_mean + scene_shift).max(0.5);
    let gap_cap = scene_gap + 3.0 * c.gap_sd;

    let mut labels = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(draw_style(&mut rng, &params.style_probs));
        let g = (scene_gap + c.gap_sd * unit.sample(&mut rng)).clamp(0.5, gap_cap);
        gaps.push(g);
        speeds.push((c.slope() * g + c.speed_noise_sd * unit.sample(&mut rng)).clamp(0.2, 10.0));
    }

    // the vehicle at `anchor` sits roughly beside the ego
    let anchor = if n > 2 { rng.random_range(n / 3..=(2 * n) / 3) } else { 0 };
    let anchor_x = params.ego_x + rng.random_range(-3.0..3.0);
    let lengths: Vec<f64> = labels.iter().map(|l| l.default_dimensions().0).collect();
    let mut xs = vec![0.0; n];
    xs[anchor] = anchor_x;
    for i in (0..anchor).rev() {
        xs[i] = xs[i + 1] + 0.5 * (lengths[i] + lengths[i + 1]) + gaps[i + 1];
    }
    for i in anchor + 1..n {
        xs[i] = xs[i - 1] - 0.5 * (lengths[i] + lengths[i - 1]) - gaps[i];
    }

    let road = params.road.clone();
    let main_vehicles = (0..n)
        .map(|i| {
            let y = main_center_y(&road, xs[i]);
            VehicleState::new(xs[i], y, 0.0, speeds[i], labels[i], Lane::Main)
        })
        .collect();
    let merge_y = {
        let p = project(&road.merge_centerline, [params.ego_x, 0.0]);
        -p.lateral
    };
    let ego = VehicleState::new(params.ego_x, merge_y, 0.0, params.ego_speed, StyleLabel::Friendly, Lane::Merge);
    let s = Scenario {
        seed,
        density,
        road,
        ego,
        main_vehicles,
    };
    s.validate()?;
    Ok(s)
}

fn main_center_y(road: &RoadGeometry, x: f64) -> f64 {
    -project(&road.main_centerline, [x, 0.0]).lateral
}

/// Scenario classification features: (mean speed, mean bumper gap) of the
/// main-lane vehicles.
pub fn scenario_features(s: &Scenario) -> Result<(f64, f64)> {
    if s.main_vehicles.is_empty() {
        return Err(Error::Undefined("scenario has no main-lane vehicles".into()));
    }
    if s.main_vehicles.len() < 2 {
        return Err(Error::Undefined("average gap needs at least two main-lane vehicles".into()));
    }
    let mut v: Vec<&VehicleState> = s.main_vehicles.iter().collect();
    v.sort_by(|a, b| b.x.partial_cmp(&a.x).unwrap_or(Ordering::Equal));
    let speed = v.iter().map(|s| s.speed()).sum::<f64>() / v.len() as f64;
    let gap = v
        .windows(2)
        .map(|w| (w[0].x - w[1].x) - 0.5 * (w[0].length + w[1].length))
        .sum::<f64>()
        / (v.len() - 1) as f64;
    Ok((speed, gap))
}

/// Component index for each density class, by ascending mean gap.
pub fn component_classes(gmm: &GmmModel) -> Result<[usize; 3]> {
    if gmm.k != 3 {
        return Err(Error::validation(format!("density classification needs k = 3, got {}", gmm.k)));
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|a, b| gmm.means[*a][1].total_cmp(&gmm.means[*b][1]));
    Ok(idx)
}

pub fn classify_features(gmm: &GmmModel, features: (f64, f64)) -> Result<DensityClass> {
    let order = component_classes(gmm)?;
    let comp = gmm.predict([features.0, features.1]);
    let rank = order.iter().position(|c| *c == comp).unwrap_or(0);
    Ok(DensityClass::ALL[rank])
}

pub fn classify(gmm: &GmmModel, s: &Scenario) -> Result<DensityClass> {
    classify_features(gmm, scenario_features(s)?)
}

/// Mixture implied by the sampler's own class distributions; used when no
/// fitted model is supplied.
pub fn bundled_gmm(params: &ScenarioParams) -> GmmModel {
    let n = 0.5 * (params.min_vehicles + params.max_vehicles) as f64;
    let mut means = Vec::new();
    let mut covariances = Vec::new();
    for d in DensityClass::ALL {
        let c = params.class(d);
        let a = c.slope();
        let var_gap = c.scene_gap_sd.powi(2) + c.gap_sd.powi(2) / (n - 1.0).max(1.0);
        let var_speed = a * a * var_gap + c.speed_noise_sd.powi(2) / n;
        means.push([c.speed_mean, c.gap_mean]);
        covariances.push([[var_speed, a * var_gap], [a * var_gap, var_gap]]);
    }
    GmmModel {
        k: 3,
        weights: vec![1.0 / 3.0; 3],
        means,
        covariances,
    }
}

pub fn to_json(s: &Scenario) -> Result<String> {
    serde_json::to_string_pretty(s).map_err(|e| Error::Parse {
        context: "scenario".into(),
        message: e.to_string(),
    })
}

pub fn from_json(text: &str, context: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })?;
    s.validate().map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })?;
    Ok(s)
}

pub fn save_scenario(path: &Path, s: &Scenario) -> Result<()> {
    let mut text = to_json(s)?;
    text.push('\n');
    crate::io::write_atomic(path, text.as_bytes())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = crate::io::read_to_string(path)?;
    from_json(&text, &path.display().to_string())
}
