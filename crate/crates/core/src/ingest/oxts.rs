use std::f64::consts::PI;

use chrono::NaiveDateTime;

use super::{IngestError, Result};

const FIELD_COUNT: usize = 30;
const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// One GPS/IMU sample. The named members are the first eleven devkit
/// fields; the remaining nineteen (accelerations, rates, accuracies,
/// satellite counts, modes) are kept verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct OxtsRecord {
    /// Degrees.
    pub lat: f64,
    pub lon: f64,
    /// Meters.
    pub alt: f64,
    /// Radians.
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Meters per second, north/east.
    pub vn: f64,
    pub ve: f64,
    /// Meters per second, forward/left/up.
    pub vf: f64,
    pub vl: f64,
    pub vu: f64,
    pub rest: [f64; 19],
}

impl OxtsRecord {
    /// A record with every field zero.
    pub fn zero() -> Self {
        OxtsRecord {
            lat: 0.0,
            lon: 0.0,
            alt: 0.0,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            vn: 0.0,
            ve: 0.0,
            vf: 0.0,
            vl: 0.0,
            vu: 0.0,
            rest: [0.0; 19],
        }
    }

    fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.lat, self.lon, self.alt, self.roll, self.pitch, self.yaw, self.vn, self.ve, self.vf,
            self.vl, self.vu,
        ]
        .into_iter()
        .chain(self.rest.iter().copied())
    }
}

/// Parses one `oxts/data/NNNNNNNNNN.txt` line.
pub fn parse_oxts(text: &str) -> Result<OxtsRecord> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != FIELD_COUNT {
        return Err(IngestError::WrongFieldCount(tokens.len()));
    }
    let mut v = [0f64; FIELD_COUNT];
    for (slot, tok) in v.iter_mut().zip(&tokens) {
        *slot = tok
            .parse()
            .map_err(|_| IngestError::MalformedNumber(text.trim().to_string()))?;
    }
    for (name, value) in [("roll", v[3]), ("pitch", v[4]), ("yaw", v[5])] {
        if !(value.abs() <= PI) {
            return Err(IngestError::AngleOutOfRange { name, value });
        }
    }
    let mut rest = [0.0; 19];
    rest.copy_from_slice(&v[11..]);
    Ok(OxtsRecord {
        lat: v[0],
        lon: v[1],
        alt: v[2],
        roll: v[3],
        pitch: v[4],
        yaw: v[5],
        vn: v[6],
        ve: v[7],
        vf: v[8],
        vl: v[9],
        vu: v[10],
        rest,
    })
}

/// Inverse of [`parse_oxts`]; shortest round-trip float formatting.
pub fn format_oxts(rec: &OxtsRecord) -> String {
    let mut line = rec.fields().map(|f| f.to_string()).collect::<Vec<_>>().join(" ");
    line.push('\n');
    line
}

/// Parses `oxts/timestamps.txt` and returns seconds relative to the first
/// line. Blank lines are skipped.
pub fn parse_timestamps(text: &str) -> Result<Vec<f64>> {
    let stamps = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            NaiveDateTime::parse_from_str(l, TIMESTAMP_FORMAT)
                .map_err(|_| IngestError::BadTimestamp(l.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(&first) = stamps.first() else {
        return Ok(Vec::new());
    };
    Ok(stamps
        .iter()
        .map(|t| {
            let d = *t - first;
            d.num_seconds() as f64 + f64::from(d.subsec_nanos()) * 1e-9
        })
        .collect())
}

/// Writes a timestamps file: `start` plus each offset (seconds), with
/// nanosecond precision.
pub fn format_timestamps(start: NaiveDateTime, offsets: &[f64]) -> String {
    offsets
        .iter()
        .map(|&s| {
            let t = start + chrono::Duration::nanoseconds((s * 1e9).round() as i64);
            format!("{}\n", t.format("%Y-%m-%d %H:%M:%S%.9f"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "49.0 8.4 112.8 0.03 0.01 1.2 -3.1 5.2 6.0 0.1 0.02 \
        0.1 0.2 9.8 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.3 0.05 4 10 4 4 0";

    #[test]
    fn zeros() {
        let rec = parse_oxts(&["0"; 30].join(" ")).unwrap();
        assert_eq!(rec, OxtsRecord::zero());
    }

    #[test]
    fn named_fields_in_devkit_order() {
        let rec = parse_oxts(LINE).unwrap();
        assert_eq!(rec.lat, 49.0);
        assert_eq!(rec.lon, 8.4);
        assert_eq!(rec.alt, 112.8);
        assert_eq!(rec.yaw, 1.2);
        assert_eq!(rec.vn, -3.1);
        assert_eq!(rec.ve, 5.2);
        assert_eq!(rec.vu, 0.02);
        assert_eq!(rec.rest[0], 0.1);
        assert_eq!(rec.rest[18], 0.0);
    }

    #[test]
    fn field_count() {
        let line = ["0"; 29].join(" ");
        assert!(matches!(parse_oxts(&line), Err(IngestError::WrongFieldCount(29))));
        let line = ["0"; 31].join(" ");
        assert!(matches!(parse_oxts(&line), Err(IngestError::WrongFieldCount(31))));
    }

    #[test]
    fn rejects_bad_angles_and_numbers() {
        let line = LINE.replacen("1.2", "4.0", 1);
        assert!(matches!(parse_oxts(&line), Err(IngestError::AngleOutOfRange { name: "yaw", .. })));
        let line = LINE.replacen("8.4", "eight", 1);
        assert!(matches!(parse_oxts(&line), Err(IngestError::MalformedNumber(_))));
    }

    #[test]
    fn writer_round_trips() {
        let rec = parse_oxts(LINE).unwrap();
        assert_eq!(parse_oxts(&format_oxts(&rec)).unwrap(), rec);
    }

    #[test]
    fn timestamps_relative_with_nanoseconds() {
        let text = "2011-09-26 13:02:25.964389445\n2011-09-26 13:02:26.074569943\n2011-09-26 13:02:26.174569943\n";
        let t = parse_timestamps(text).unwrap();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 0.110180498).abs() < 1e-12);
        assert!((t[2] - 0.210180498).abs() < 1e-12);
        assert!(matches!(parse_timestamps("yesterday"), Err(IngestError::BadTimestamp(_))));
    }

    #[test]
    fn timestamps_round_trip() {
        let start = NaiveDateTime::parse_from_str("2011-09-26 13:02:25.0", TIMESTAMP_FORMAT).unwrap();
        let offsets = [0.0, 0.1, 0.2, 1.05];
        let back = parse_timestamps(&format_timestamps(start, &offsets)).unwrap();
        for (a, b) in offsets.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
