//! Evaluation prompt template.

use std::fmt::Write;

use crate::eval::PriorKnowledge;
use crate::metrics::{DriveMode, EpisodeMetrics};

pub const SYSTEM_PROMPT: &str = "You are an expert driving instructor who reviews how an automated \
vehicle merged from an on-ramp into dense highway traffic.";

fn mode_clause(mode: DriveMode) -> &'static str {
    match mode {
        DriveMode::Hurry => "Drive mode: hurry. The passenger is in a hurry and values a quick merge.",
        DriveMode::Medium => "Drive mode: medium. The passenger wants a balance of speed and comfort.",
        DriveMode::Relax => "Drive mode: relax. The passenger is relaxed and values a gentle ride.",
    }
}

/// Renders the user message. Numbers are printed with two decimals so the
/// text is byte-identical for identical inputs.
pub fn build_prompt(m: &EpisodeMetrics, p: &PriorKnowledge, mode: DriveMode) -> String {
    let mut s = String::new();
    let merge = match m.merging_point_x {
        Some(x) => format!("{x:.2} m"),
        None => "not reached".to_string(),
    };
    let _ = writeln!(s, "Review the following merge of the ego vehicle.");
    let _ = writeln!(s);
    let _ = writeln!(s, "Ego vehicle:");
    let _ = writeln!(s, "- Total time: {:.2} s", m.total_time);
    let _ = writeln!(s, "- Average speed: {:.2} m/s", m.avg_speed);
    let _ = writeln!(s, "- Merging point: {merge}");
    let _ = writeln!(s, "- Average jerk: {:.2} m/s^3", m.avg_jerk);
    let _ = writeln!(s, "- Max jerk: {:.2} m/s^3", m.max_jerk);
    let _ = writeln!(s, "- Average distance to other vehicles: {:.2} m", m.avg_gap);
    let _ = writeln!(s, "- Minimum distance to other vehicles: {:.2} m", m.min_gap);
    let _ = writeln!(s, "- Outcome: {}", m.outcome.label());
    let _ = writeln!(s);
    let _ = writeln!(s, "Main-lane traffic:");
    let _ = writeln!(s, "- Others average speed: {:.2} m/s", m.others_avg_speed);
    let _ = writeln!(s, "- Density class: {}", m.density.display_name());
    let _ = writeln!(s);
    let _ = writeln!(s, "Reference values:");
    let _ = writeln!(s, "- Comfortable acceleration: |a| <= {:.2} m/s^2", p.comfort_accel_max);
    let _ = writeln!(s, "- Comfortable jerk: <= {:.2} m/s^3", p.comfort_jerk_max);
    let _ = writeln!(
        s,
        "- Efficient speed: {:.2} to {:.2} times the others average speed",
        p.efficient_speed_band[0], p.efficient_speed_band[1]
    );
    let _ = writeln!(s, "- Safe time gap to other vehicles: {:.2} s", p.safe_time_gap);
    let _ = writeln!(
        s,
        "- Efficient merge duration: {:.2} to {:.2} s",
        p.efficient_time_band[0], p.efficient_time_band[1]
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{}", mode_clause(mode));
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Analyze the merge from three perspectives: safety, comfort, and efficiency, \
weighing them according to the drive mode."
    );
    let _ = writeln!(
        s,
        "Do not assign a separate score to each perspective. Give one comprehensive score from 0 to 10."
    );
    let _ = writeln!(s, "Then suggest concrete improvements to the driving behavior.");
    let _ = writeln!(s);
    let _ = writeln!(s, "Answer with exactly one fenced JSON block of this form:");
    let _ = writeln!(s, "```json");
    let _ = writeln!(s, "{{\"score\": number, \"analysis\": string, \"suggestions\": [string]}}");
    let _ = write!(s, "```");
    s
}
