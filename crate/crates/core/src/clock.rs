//! Wall-clock conversions for the daily cycle.

use chrono::{Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;

use crate::domain::{to_seconds, Timestamp};

/// UTC instant of a local clock time on a local calendar day. Nonexistent local
/// times (DST gaps) move forward to the first valid instant; ambiguous ones take
/// the earlier reading.
pub fn local_instant(tz: Tz, day: NaiveDate, time: NaiveTime) -> Timestamp {
    let local = day.and_time(time);
    let mut probe = local;
    for _ in 0..=180 {
        if let Some(dt) = tz.from_local_datetime(&probe).earliest() {
            return to_seconds(dt.with_timezone(&Utc));
        }
        probe += Duration::minutes(1);
    }
    // No zone has a gap longer than three hours.
    to_seconds(Utc.from_utc_datetime(&local))
}

/// Local calendar day of a UTC instant.
pub fn local_day(tz: Tz, ts: Timestamp) -> NaiveDate {
    ts.with_timezone(&tz).date_naive()
}

pub fn parse_clock_time(s: &str) -> Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|e| format!("invalid clock time {s:?}: {e}"))
}

pub fn parse_timezone(s: &str) -> Result<Tz, String> {
    s.parse::<Tz>()
        .map_err(|e| format!("unknown timezone {s:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shanghai_evening_is_utc_noon() {
        let tz = parse_timezone("Asia/Shanghai").unwrap();
        let day = NaiveDate::from_ymd_opt(2026, 4, 18).unwrap();
        let t = local_instant(tz, day, parse_clock_time("20:00").unwrap());
        assert_eq!(t.to_rfc3339(), "2026-04-18T12:00:00+00:00");
        assert_eq!(local_day(tz, t), day);
    }

    #[test]
    fn dst_gap_moves_forward() {
        let tz = parse_timezone("America/New_York").unwrap();
        let day = NaiveDate::from_ymd_opt(2026, 3, 8).unwrap();
        let t = local_instant(tz, day, parse_clock_time("02:30").unwrap());
        assert_eq!(t.to_rfc3339(), "2026-03-08T07:00:00+00:00");
    }

    #[test]
    fn bad_inputs() {
        assert!(parse_clock_time("25:00").is_err());
        assert!(parse_timezone("Mars/Olympus").is_err());
    }
}
