//! Fixed reply texts and the rich-menu page cards.

use crate::gateway::Card;
use crate::recommend::{Recommendation, SensorSnapshot};
use crate::sim::{ActuatorState, Forecast};

pub const PROMPT_START: &str = "Please tap START in the menu to begin using the farm assistant.";
pub const WELCOME: &str = "Welcome to the lettuce farm assistant! Use the menu to monitor your field and switch drip or mist irrigation, or type a question such as \"weather forecast\".";
pub const FAREWELL: &str =
    "The farm assistant is stopped. You will not receive updates until you tap START again.";
pub const APOLOGY: &str = "Sorry, something went wrong on our side. Please try again.";
pub const NO_VIDEO: &str = "No knowledge video is available today.";

pub fn soil(v: f64) -> String {
    format!("{v:.1} %VWC")
}

pub fn temp(v: f64) -> String {
    format!("{v:.1} °C")
}

pub fn humidity(v: f64) -> String {
    format!("{v:.1} %")
}

pub fn light(v: f64) -> String {
    format!("{v:.0} lux")
}

/// Sensor readings plus both switch states.
pub fn status_card(title: &str, snap: &SensorSnapshot, act: ActuatorState) -> Card {
    Card::new(title)
        .field("soil_moisture", soil(snap.soil_moisture))
        .field("air_temp", temp(snap.air_temp))
        .field("rel_humidity", humidity(snap.rel_humidity))
        .field("light", light(snap.light))
        .field("drip", act.drip.as_str())
        .field("mist", act.mist.as_str())
}

pub fn main_card(snap: &SensorSnapshot, act: ActuatorState, latest: Option<&str>) -> Card {
    Card::new("Main page")
        .field("soil_moisture", soil(snap.soil_moisture))
        .field("air_temp", temp(snap.air_temp))
        .field("drip", act.drip.as_str())
        .field("mist", act.mist.as_str())
        .field("latest_recommendation", latest.unwrap_or("none"))
}

pub fn drip_card(snap: &SensorSnapshot, act: ActuatorState) -> Card {
    Card::new("Drip irrigation")
        .field("drip", act.drip.as_str())
        .field("soil_moisture", soil(snap.soil_moisture))
        .field("commands", "DRIP_ON, DRIP_OFF")
}

pub fn mist_card(snap: &SensorSnapshot, act: ActuatorState) -> Card {
    Card::new("Mist irrigation")
        .field("mist", act.mist.as_str())
        .field("air_temp", temp(snap.air_temp))
        .field("rel_humidity", humidity(snap.rel_humidity))
        .field("commands", "MIST_ON, MIST_OFF")
}

pub fn recommendation_text(rec: &Recommendation) -> String {
    match rec.advised_action {
        Some(action) => format!(
            "[{}] {} Suggested action: {action}.",
            rec.process.label(),
            rec.message
        ),
        None => format!("[{}] {}", rec.process.label(), rec.message),
    }
}

pub fn forecast_text(days: &[Forecast]) -> String {
    let mut out = format!("{}-day weather forecast:", days.len());
    for (i, f) in days.iter().enumerate() {
        out.push_str(&format!(
            "\nDay {}: {:.1}-{:.1} °C, {}% chance of rain",
            i + 1,
            f.min_temp,
            f.max_temp,
            f.rain_chance
        ));
    }
    out
}

fn quoted_list(items: &[&str]) -> String {
    items
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn did_you_mean(suggestions: &[String]) -> String {
    let items: Vec<&str> = suggestions.iter().map(String::as_str).collect();
    format!("Did you mean: {}?", quoted_list(&items))
}

pub fn fallback(keywords: &[&str]) -> String {
    format!(
        "Sorry, I don't understand that. Try one of these keywords: {}.",
        quoted_list(keywords)
    )
}

pub fn help(keywords: &[&str]) -> String {
    format!(
        "Menu: START/STOP, MAIN, DRIP, MIST, MONITOR. On the DRIP and MIST pages you can switch irrigation ON or OFF.\nYou can also type: {}.",
        quoted_list(keywords)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_suggestion_template() {
        assert_eq!(
            did_you_mean(&["weather forecast".to_string()]),
            "Did you mean: \"weather forecast\"?"
        );
    }

    #[test]
    fn forecast_has_a_line_per_day() {
        let days: Vec<Forecast> = (0..7)
            .map(|d| Forecast {
                day_index: d,
                min_temp: 20.0,
                max_temp: 30.0,
                rain_chance: 10,
            })
            .collect();
        let text = forecast_text(&days);
        assert_eq!(text.lines().count(), 8);
        assert!(text.lines().nth(7).unwrap().starts_with("Day 7: 20.0-30.0 °C"));
    }
}
