use std::io::{Read, Write};

use chrono::NaiveDate;

use super::weather::WEATHER_COLUMNS;
use crate::error::{Error, Result};

/// Cause code of natural (lightning) ignitions; the positive class.
pub const CAUSE_LIGHTNING: u8 = 1;
const MAX_CAUSE: u8 = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct FireRecord {
    pub fod_id: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub discovery_date: NaiveDate,
    pub cause_code: u8,
    pub fire_size: Option<f64>,
    pub vegetation_category: u8,
    /// 7/15/30-day means of temperature, wind, humidity and precipitation,
    /// in [`WEATHER_COLUMNS`] order.
    pub weather: [f64; 12],
}

impl FireRecord {
    pub fn is_natural(&self) -> bool {
        self.cause_code == CAUSE_LIGHTNING
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<FireRecord>,
    /// Rows dropped because a required cell was empty.
    pub dropped: usize,
}

const REQUIRED: [&str; 6] = [
    "FOD_ID",
    "LATITUDE",
    "LONGITUDE",
    "DISCOVERY_DATE",
    "STAT_CAUSE_CODE",
    "veg_category",
];

struct Columns {
    required: [usize; 6],
    weather: [usize; 12],
    fire_size: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let missing = |name: &str| Error::Parse {
            line: 1,
            detail: format!("header lacks column {name}"),
        };
        let mut required = [0; 6];
        for (slot, name) in required.iter_mut().zip(REQUIRED) {
            *slot = find(name).ok_or_else(|| missing(name))?;
        }
        let mut weather = [0; 12];
        for (slot, name) in weather.iter_mut().zip(WEATHER_COLUMNS) {
            *slot = find(name).ok_or_else(|| missing(name))?;
        }
        Ok(Self { required, weather, fire_size: find("FIRE_SIZE") })
    }
}

fn number<T: std::str::FromStr>(cell: &str, line: u64, field: &'static str) -> Result<T> {
    cell.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("{field}: cannot parse {cell:?}"),
    })
}

fn check(ok: bool, line: u64, field: &'static str, detail: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation { line, field, detail: detail.into() })
    }
}

/// Reads fire records from CSV with a header row.
///
/// Required columns are `FOD_ID`, `LATITUDE`, `LONGITUDE`, `DISCOVERY_DATE`
/// (`YYYY-MM-DD`), `STAT_CAUSE_CODE`, `veg_category` and the twelve weather
/// aggregates; `FIRE_SIZE` is optional and other columns are ignored. Rows
/// with an empty required cell are dropped and counted.
pub fn parse_records<R: Read>(input: R) -> Result<ParsedRecords> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, detail: e.to_string() })?
        .clone();
    let cols = Columns::locate(&headers)?;
    let mut out = ParsedRecords::default();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("").trim();
        let blank = cols.required.iter().chain(&cols.weather).any(|&i| cell(i).is_empty());
        if blank {
            out.dropped += 1;
            continue;
        }
        let [id, lat, lon, date, cause, veg] = cols.required.map(cell);
        let latitude: f64 = number(lat, line, "LATITUDE")?;
        let longitude: f64 = number(lon, line, "LONGITUDE")?;
        check((-90.0..=90.0).contains(&latitude), line, "LATITUDE", lat)?;
        check((-180.0..=180.0).contains(&longitude), line, "LONGITUDE", lon)?;
        let discovery_date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            detail: format!("DISCOVERY_DATE: cannot parse {date:?}"),
        })?;
        let cause_code: u8 = number(cause, line, "STAT_CAUSE_CODE")?;
        check((1..=MAX_CAUSE).contains(&cause_code), line, "STAT_CAUSE_CODE", cause)?;
        let vegetation_category: u8 = number(veg, line, "veg_category")?;
        check((1..=28).contains(&vegetation_category), line, "veg_category", veg)?;
        let mut weather = [0.0; 12];
        for (w, (&i, name)) in weather.iter_mut().zip(cols.weather.iter().zip(WEATHER_COLUMNS)) {
            *w = number::<f64>(cell(i), line, name)?;
            check(w.is_finite(), line, name, cell(i))?;
        }
        let fire_size = match cols.fire_size.map(cell) {
            Some(s) if !s.is_empty() => Some(number(s, line, "FIRE_SIZE")?),
            _ => None,
        };
        out.records.push(FireRecord {
            fod_id: number(id, line, "FOD_ID")?,
            latitude,
            longitude,
            discovery_date,
            cause_code,
            fire_size,
            vegetation_category,
            weather,
        });
    }
    Ok(out)
}

/// Writes records in the layout [`parse_records`] reads.
pub fn write_records<W: Write>(output: W, records: &[FireRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    let io = |e: csv::Error| Error::Encoding(e.to_string());
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.push("FIRE_SIZE");
    header.extend(WEATHER_COLUMNS);
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![
            r.fod_id.to_string(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.discovery_date.format("%Y-%m-%d").to_string(),
            r.cause_code.to_string(),
            r.vegetation_category.to_string(),
            r.fire_size.map(|s| s.to_string()).unwrap_or_default(),
        ];
        row.extend(r.weather.iter().map(f64::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Encoding(e.to_string()))
}
