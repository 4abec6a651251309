//! Bundled data: annual averaged inflation in Nicaragua 1980-1997 as
//! published in two IMF World Economic Outlook vintages.

use crate::series::{read_csv, ObservationSeries, SeriesKind, SeriesMeta};

pub const NICARAGUA_IMF1_CSV: &str = include_str!("../data/nicaragua_imf1.csv");
pub const NICARAGUA_IMF2_CSV: &str = include_str!("../data/nicaragua_imf2.csv");

fn load(csv: &str, source: &str) -> ObservationSeries {
    read_csv(csv.as_bytes(), SeriesKind::InflationPct)
        .expect("bundled csv is well formed")
        .with_meta(SeriesMeta {
            country_label: "Nicaragua".into(),
            source_label: source.into(),
            normalization_year: None,
        })
}

/// Earlier vintage (the one the raw-price fit in the literature used).
pub fn nicaragua_imf1() -> ObservationSeries {
    load(NICARAGUA_IMF1_CSV, "IMF WEO (first vintage)")
}

/// Revised vintage: the hyperinflation peak moves one year earlier.
pub fn nicaragua_imf2() -> ObservationSeries {
    load(NICARAGUA_IMF2_CSV, "IMF WEO (revised vintage)")
}
