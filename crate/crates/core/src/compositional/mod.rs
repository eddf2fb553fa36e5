//! Three-part compositions (A/H1N1pdm, A/H3N2 and B shares), their
//! isometric log-ratio coordinates, and aggregation of weekly case counts
//! into per-unit seasonal compositions.

mod fixture;
mod pipeline;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::FORMAT_VERSION;

pub use fixture::{synthetic_fixture, FixtureConfig};
pub use pipeline::{run_flu, FluConfig, FluReport, LeafReport};

const SQRT_2_3: f64 = 0.816_496_580_927_726;
const SQRT_3_2: f64 = 1.224_744_871_391_589;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition3 {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl Composition3 {
    /// Normalizes positive parts to sum to one.
    pub fn from_parts(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a + b + c).is_finite() {
            return Err(Error::Domain { family: "composition", value: a.min(b).min(c) });
        }
        let s = a + b + c;
        Ok(Self { p1: a / s, p2: b / s, p3: c / s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlrPoint {
    pub y1: f64,
    pub y2: f64,
}

/// y1 = √(2/3)·ln(p3 / √(p1·p2)), y2 = √(1/2)·ln(p1 / p2).
pub fn ilr_forward(c: &Composition3) -> Result<IlrPoint> {
    for p in [c.p1, c.p2, c.p3] {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Domain { family: "composition", value: p });
        }
    }
    let (l1, l2, l3) = (c.p1.ln(), c.p2.ln(), c.p3.ln());
    Ok(IlrPoint { y1: SQRT_2_3 * (l3 - 0.5 * (l1 + l2)), y2: std::f64::consts::FRAC_1_SQRT_2 * (l1 - l2) })
}

/// Inverse of [`ilr_forward`]: log-parts (y2/√2, −y2/√2, √(3/2)·y1) closed to the simplex.
pub fn ilr_inverse(p: &IlrPoint) -> Composition3 {
    let z = [p.y2 * std::f64::consts::FRAC_1_SQRT_2, -p.y2 * std::f64::consts::FRAC_1_SQRT_2, SQRT_3_2 * p.y1];
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    Composition3 { p1: e[0] / s, p2: e[1] / s, p3: e[2] / s }
}

/// An ISO 8601 week, written `YYYY-Www`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IsoWeek {
    pub year: i32,
    pub week: u32,
}

impl IsoWeek {
    pub fn monday(&self) -> Option<NaiveDate> {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon)
    }

    pub fn of_date(d: NaiveDate) -> Self {
        let w = d.iso_week();
        Self { year: w.year(), week: w.week() }
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

impl std::str::FromStr for IsoWeek {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (y, w) = s.split_once("-W").ok_or_else(|| format!("`{s}` is not of the form YYYY-Www"))?;
        let year: i32 = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let week: u32 = w.parse().map_err(|_| format!("bad week in `{s}`"))?;
        let iw = Self { year, week };
        iw.monday().ok_or_else(|| format!("`{s}` is not a valid ISO week"))?;
        Ok(iw)
    }
}

/// Seasons start with the ISO week containing `month`/`day`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonBoundary {
    pub month: u32,
    pub day: u32,
}

impl Default for SeasonBoundary {
    fn default() -> Self {
        Self { month: 4, day: 1 }
    }
}

impl SeasonBoundary {
    fn start_monday(&self, year: i32) -> Result<NaiveDate> {
        let d = NaiveDate::from_ymd_opt(year, self.month, self.day)
            .ok_or_else(|| Error::Config(format!("invalid season boundary {}/{}", self.month, self.day)))?;
        Ok(IsoWeek::of_date(d).monday().expect("week of a valid date"))
    }

    /// Calendar year in which the season containing `week` starts.
    pub fn season_of(&self, week: IsoWeek) -> Result<i32> {
        let monday = week.monday().ok_or_else(|| Error::Input(format!("invalid ISO week {week}")))?;
        let y = monday.year();
        Ok(if monday >= self.start_monday(y)? { y } else { y - 1 })
    }
}

/// Season label such as `2014-15` for the season starting in 2014.
pub fn season_label(start_year: i32) -> String {
    format!("{start_year}-{:02}", (start_year + 1).rem_euclid(100))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklyRecord {
    pub unit: String,
    pub week: IsoWeek,
    /// Cases of A/H1N1pdm, A/H3N2 and B.
    pub counts: [u64; 3],
    /// Optional grouping label (for example a transmission zone).
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSeason {
    pub unit: String,
    pub season: String,
    pub season_start: i32,
    pub group: Option<String>,
    pub counts: [u64; 3],
    pub composition: Composition3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub boundary: SeasonBoundary,
    pub min_total: u64,
    pub pseudo_count: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self { boundary: SeasonBoundary::default(), min_total: 50, pseudo_count: 0.5 }
    }
}

/// Sums weekly counts per unit and season, drops unit-seasons with fewer than
/// `min_total` cases and closes the rest, replacing zero cells by the pseudo-count.
/// Output is sorted by unit, then season.
pub fn aggregate_counts(records: &[WeeklyRecord], cfg: &AggregationConfig) -> Result<Vec<UnitSeason>> {
    let mut sums: BTreeMap<(String, i32), ([u64; 3], Option<String>)> = BTreeMap::new();
    let mut unit_group: BTreeMap<&str, &Option<String>> = BTreeMap::new();
    for (row, r) in records.iter().enumerate() {
        if let Some(g) = unit_group.insert(&r.unit, &r.group) {
            if g != &r.group {
                return Err(Error::Ingestion { row, msg: format!("unit `{}` has more than one group label", r.unit) });
            }
        }
        let season = cfg.boundary.season_of(r.week).map_err(|e| Error::Ingestion { row, msg: e.to_string() })?;
        let entry = sums.entry((r.unit.clone(), season)).or_insert(([0; 3], r.group.clone()));
        for k in 0..3 {
            entry.0[k] += r.counts[k];
        }
    }
    let mut out = Vec::new();
    for ((unit, season_start), (counts, group)) in sums {
        if counts.iter().sum::<u64>() < cfg.min_total {
            continue;
        }
        let part = |c: u64| if c == 0 { cfg.pseudo_count } else { c as f64 };
        let composition = Composition3::from_parts(part(counts[0]), part(counts[1]), part(counts[2]))?;
        out.push(UnitSeason { unit, season: season_label(season_start), season_start, group, counts, composition });
    }
    Ok(out)
}

const WEEKLY_COLUMNS: [&str; 5] = ["unit_id", "iso_week", "count_h1", "count_h3", "count_b"];
const GROUP_COLUMN: &str = "itz";

fn comment_free<R: Read>(mut reader: R) -> Result<String> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n"))
}

/// Reads `unit_id, iso_week, count_h1, count_h3, count_b[, itz]`. Lines
/// starting with `#` are skipped; ingestion errors report 1-based data rows.
pub fn read_weekly_csv<R: Read>(reader: R) -> Result<Vec<WeeklyRecord>> {
    let text = comment_free(reader)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let idx: Vec<usize> = WEEKLY_COLUMNS
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::Schema(format!("missing column `{c}`"))))
        .collect::<Result<_>>()?;
    let group_idx = col(GROUP_COLUMN);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Ingestion { row, msg: e.to_string() })?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let unit = field(idx[0]).to_string();
        if unit.is_empty() {
            return Err(Error::Ingestion { row, msg: "empty unit_id".into() });
        }
        let week: IsoWeek = field(idx[1]).parse().map_err(|msg| Error::Ingestion { row, msg })?;
        let mut counts = [0u64; 3];
        for k in 0..3 {
            counts[k] = field(idx[2 + k])
                .parse()
                .map_err(|_| Error::Ingestion { row, msg: format!("`{}` is not a non-negative count", field(idx[2 + k])) })?;
        }
        let group = group_idx.map(|j| field(j).to_string()).filter(|g| !g.is_empty());
        out.push(WeeklyRecord { unit, week, counts, group });
    }
    Ok(out)
}

pub fn write_weekly_csv<W: Write>(records: &[WeeklyRecord], mut w: W) -> Result<()> {
    let with_group = records.iter().any(|r| r.group.is_some());
    write!(w, "{}", WEEKLY_COLUMNS.join(","))?;
    if with_group {
        write!(w, ",{GROUP_COLUMN}")?;
    }
    writeln!(w)?;
    for r in records {
        write!(w, "{},{},{},{},{}", r.unit, r.week, r.counts[0], r.counts[1], r.counts[2])?;
        if with_group {
            write!(w, ",{}", r.group.as_deref().unwrap_or(""))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per unit-season ILR coordinates: `unit_id, season, y1, y2, itz`.
pub fn write_ilr_csv<W: Write>(rows: &[UnitSeason], mut w: W) -> Result<()> {
    writeln!(w, "# format_version: {FORMAT_VERSION}")?;
    writeln!(w, "unit_id,season,y1,y2,{GROUP_COLUMN}")?;
    for r in rows {
        let p = ilr_forward(&r.composition)?;
        writeln!(w, "{},{},{},{},{}", r.unit, r.season, p.y1, p.y2, r.group.as_deref().unwrap_or(""))?;
    }
    Ok(())
}
