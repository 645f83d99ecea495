//! Trailing-window means over hourly station observations.

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

pub const WEATHER_COLUMNS: [&str; 12] = [
    "avg_temp_7d",
    "avg_temp_15d",
    "avg_temp_30d",
    "avg_wind_7d",
    "avg_wind_15d",
    "avg_wind_30d",
    "avg_humid_7d",
    "avg_humid_15d",
    "avg_humid_30d",
    "avg_precip_7d",
    "avg_precip_15d",
    "avg_precip_30d",
];

const WINDOW_DAYS: [usize; 3] = [7, 15, 30];
const SPAN_HOURS: usize = 30 * 24;
const MAX_MISSING: f64 = 0.5;
const VARIABLES: [&str; 4] = ["temperature", "wind speed", "humidity", "precipitation"];

/// One reading; any variable may be missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyObservation {
    pub time: NaiveDateTime,
    pub temperature: Option<f64>,
    pub wind_speed: Option<f64>,
    pub humidity: Option<f64>,
    pub precipitation: Option<f64>,
}

impl HourlyObservation {
    fn values(&self) -> [Option<f64>; 4] {
        [self.temperature, self.wind_speed, self.humidity, self.precipitation]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    observations: Vec<HourlyObservation>,
}

impl WeatherSeries {
    pub fn new(observations: Vec<HourlyObservation>) -> Result<Self> {
        if observations.windows(2).any(|w| w[0].time >= w[1].time) {
            return Err(Error::Encoding("weather timestamps must be strictly increasing".into()));
        }
        for o in &observations {
            if o.humidity.is_some_and(|h| !(0.0..=100.0).contains(&h)) {
                return Err(Error::Encoding(format!("humidity out of [0,100] at {}", o.time)));
            }
            if o.precipitation.is_some_and(|p| p < 0.0) {
                return Err(Error::Encoding(format!("negative precipitation at {}", o.time)));
            }
            if o.values().iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Encoding(format!("non-finite reading at {}", o.time)));
            }
        }
        Ok(Self { observations })
    }

    pub fn observations(&self) -> &[HourlyObservation] {
        &self.observations
    }
}

/// Means over the trailing 7, 15 and 30 days before `discovery_date` 00:00,
/// ordered as [`WEATHER_COLUMNS`].
///
/// Readings are bucketed by hour (several readings in one hour are averaged
/// first). Missing hours are left out of both sums; a window with more than
/// half its hours missing is an error.
pub fn aggregate_weather(series: &WeatherSeries, discovery_date: NaiveDate) -> Result<[f64; 12]> {
    let end = discovery_date.and_hms_opt(0, 0, 0).expect("midnight exists");
    let start = end - chrono::Duration::hours(SPAN_HOURS as i64);
    let mut sums = vec![[0.0f64; 4]; SPAN_HOURS];
    let mut counts = vec![[0u32; 4]; SPAN_HOURS];
    for o in series.observations() {
        if o.time < start || o.time >= end {
            continue;
        }
        let slot = ((o.time - start).num_minutes() / 60) as usize;
        for (v, value) in o.values().into_iter().enumerate() {
            if let Some(x) = value {
                sums[slot][v] += x;
                counts[slot][v] += 1;
            }
        }
    }
    let mut out = [0.0; 12];
    for v in 0..4 {
        for (w, days) in WINDOW_DAYS.iter().enumerate() {
            let hours = days * 24;
            let (mut total, mut present) = (0.0, 0usize);
            for slot in SPAN_HOURS - hours..SPAN_HOURS {
                if counts[slot][v] > 0 {
                    total += sums[slot][v] / counts[slot][v] as f64;
                    present += 1;
                }
            }
            let missing = (hours - present) as f64 / hours as f64;
            if missing > MAX_MISSING {
                return Err(Error::Coverage(format!(
                    "{} {days}-day window is {:.0}% missing",
                    VARIABLES[v],
                    missing * 100.0
                )));
            }
            out[v * 3 + w] = total / present as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 8, 1).unwrap()
    }

    fn series(value: impl Fn(usize) -> Option<f64>) -> WeatherSeries {
        let start = date().and_hms_opt(0, 0, 0).unwrap() - chrono::Duration::hours(720);
        let obs = (0..720)
            .map(|h| HourlyObservation {
                time: start + chrono::Duration::hours(h as i64),
                temperature: value(h),
                wind_speed: Some(3.0),
                humidity: Some(40.0),
                precipitation: Some(0.0),
            })
            .collect();
        WeatherSeries::new(obs).unwrap()
    }

    #[test]
    fn constant_series() {
        let s = series(|_| Some(2.5));
        let out = aggregate_weather(&s, date()).unwrap();
        assert_eq!(&out[..3], &[2.5; 3]);
        assert_eq!(&out[3..6], &[3.0; 3]);
        assert_eq!(&out[6..9], &[40.0; 3]);
        assert_eq!(&out[9..], &[0.0; 3]);
    }

    #[test]
    fn hour_index_series_matches_arithmetic_means() {
        let s = series(|h| Some(h as f64));
        let out = aggregate_weather(&s, date()).unwrap();
        // Mean of the integers a..=719 is (a + 719) / 2.
        for (i, days) in [7usize, 15, 30].iter().enumerate() {
            let first = 720 - days * 24;
            assert_eq!(out[i], (first + 719) as f64 / 2.0);
        }
        assert!(out[0] > out[1] && out[1] > out[2]);
    }

    #[test]
    fn sparse_windows_are_rejected() {
        // 60% of the final 168 hours missing.
        let s = series(|h| (h < 720 - 101).then_some(1.0));
        match aggregate_weather(&s, date()) {
            Err(Error::Coverage(msg)) => assert!(msg.contains("temperature 7-day"), "{msg}"),
            other => panic!("{other:?}"),
        }
        // Exactly half missing is tolerated and averages the rest.
        let s = series(|h| (h % 2 == 0).then_some(h as f64));
        assert!(aggregate_weather(&s, date()).is_ok());
    }

    #[test]
    fn readings_outside_the_window_are_ignored() {
        let s = series(|_| Some(1.0));
        let mut obs = s.observations().to_vec();
        let end = date().and_hms_opt(0, 0, 0).unwrap();
        obs.push(HourlyObservation {
            time: end,
            temperature: Some(1e6),
            wind_speed: None,
            humidity: None,
            precipitation: None,
        });
        let s = WeatherSeries::new(obs).unwrap();
        assert_eq!(aggregate_weather(&s, date()).unwrap()[0], 1.0);
    }

    #[test]
    fn series_invariants() {
        let t = date().and_hms_opt(0, 0, 0).unwrap();
        let o = |time, humidity| HourlyObservation {
            time,
            temperature: None,
            wind_speed: None,
            humidity: Some(humidity),
            precipitation: None,
        };
        assert!(WeatherSeries::new(vec![o(t, 10.0), o(t, 10.0)]).is_err());
        assert!(WeatherSeries::new(vec![o(t, 101.0)]).is_err());
    }
}
