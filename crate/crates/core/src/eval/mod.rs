//! Scoring a finished merge: prompt construction, an LLM client, and an
//! offline rubric that returns the same result shape.

pub mod llm;
pub mod mock;
pub mod prompt;
pub mod rubric;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use llm::{evaluate_llm, parse_verdict, LlmEndpointConfig};
pub use prompt::{build_prompt, SYSTEM_PROMPT};
pub use rubric::{evaluate_rubric, rubric_components, Components};

/// Reference values handed to the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorKnowledge {
    /// Largest comfortable |a|, m/s^2.
    pub comfort_accel_max: f64,
    /// Largest comfortable jerk, m/s^3.
    pub comfort_jerk_max: f64,
    /// Efficient ego speed as a multiple of the surrounding traffic speed.
    pub efficient_speed_band: [f64; 2],
    /// Smallest safe time gap, s.
    pub safe_time_gap: f64,
    /// Merge durations considered efficient, s.
    pub efficient_time_band: [f64; 2],
}

impl Default for PriorKnowledge {
    fn default() -> Self {
        PriorKnowledge {
            comfort_accel_max: 2.5,
            comfort_jerk_max: 2.0,
            efficient_speed_band: [0.8, 1.5],
            safe_time_gap: 1.0,
            efficient_time_band: [5.0, 15.0],
        }
    }
}

impl PriorKnowledge {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.comfort_accel_max,
            self.comfort_jerk_max,
            self.efficient_speed_band[0],
            self.efficient_speed_band[1],
            self.safe_time_gap,
            self.efficient_time_band[0],
            self.efficient_time_band[1],
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::validation("prior knowledge values must be finite and positive"));
        }
        if self.efficient_speed_band[0] >= self.efficient_speed_band[1]
            || self.efficient_time_band[0] >= self.efficient_time_band[1]
        {
            return Err(Error::validation("prior knowledge bands must be ordered low < high"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionId {
    EnhanceAwareness,
    SmoothAcceleration,
    ImproveGapSeeking,
    ReduceHesitation,
    MaintainSafeGap,
    Other,
}

impl SuggestionId {
    pub const ALL: [SuggestionId; 6] = [
        SuggestionId::EnhanceAwareness,
        SuggestionId::SmoothAcceleration,
        SuggestionId::ImproveGapSeeking,
        SuggestionId::ReduceHesitation,
        SuggestionId::MaintainSafeGap,
        SuggestionId::Other,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            SuggestionId::EnhanceAwareness => "Enhance awareness",
            SuggestionId::SmoothAcceleration => "Smooth Acceleration",
            SuggestionId::ImproveGapSeeking => "Improve gap seeking",
            SuggestionId::ReduceHesitation => "Reduce hesitation",
            SuggestionId::MaintainSafeGap => "Maintain safe gap",
            SuggestionId::Other => "Other",
        }
    }

    /// Bins free text by the first canonical phrase it contains, ignoring
    /// case and runs of whitespace.
    pub fn classify(text: &str) -> SuggestionId {
        let norm = normalize(text);
        SuggestionId::ALL[..5]
            .iter()
            .copied()
            .find(|id| norm.contains(&normalize(id.phrase())))
            .unwrap_or(SuggestionId::Other)
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl fmt::Display for SuggestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: SuggestionId,
    pub text: String,
}

impl Suggestion {
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        Suggestion {
            id: SuggestionId::classify(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSource {
    Llm,
    Rubric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Overall score in `[0, 10]`.
    pub score: f64,
    pub analysis: String,
    pub suggestions: Vec<Suggestion>,
    pub source: EvalSource,
    /// Set when an out-of-range score was pulled back into `[0, 10]`.
    pub clamped: bool,
}

impl EvalResult {
    pub fn suggestion_ids(&self) -> Vec<SuggestionId> {
        self.suggestions.iter().map(|s| s.id).collect()
    }
}
