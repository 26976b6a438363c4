// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Calendar buckets for roll-ups in the time dimension. All buckets are UTC.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};

use crate::error::MmgcError;
use crate::types::Timestamp;

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RollupLevel {
    Hour,
    Day,
    Month,
    Year,
}

impl RollupLevel {
    /// Start of the bucket containing `ts`.
    pub fn floor(self, ts: Timestamp) -> Timestamp {
        match self {
            RollupLevel::Hour => ts.div_euclid(HOUR_MS) * HOUR_MS,
            RollupLevel::Day => ts.div_euclid(DAY_MS) * DAY_MS,
            RollupLevel::Month => {
                let date = civil(ts);
                month_start(date.year(), date.month())
            }
            RollupLevel::Year => month_start(civil(ts).year(), 1),
        }
    }

    /// First bucket boundary strictly after `ts`.
    pub fn next_boundary(self, ts: Timestamp) -> Timestamp {
        let floor = self.floor(ts);
        match self {
            RollupLevel::Hour => floor + HOUR_MS,
            RollupLevel::Day => floor + DAY_MS,
            RollupLevel::Month => {
                let date = civil(floor);
                if date.month() == 12 {
                    month_start(date.year() + 1, 1)
                } else {
                    month_start(date.year(), date.month() + 1)
                }
            }
            RollupLevel::Year => month_start(civil(floor).year() + 1, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RollupLevel::Hour => "hour",
            RollupLevel::Day => "day",
            RollupLevel::Month => "month",
            RollupLevel::Year => "year",
        }
    }
}

impl fmt::Display for RollupLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RollupLevel {
    type Err = MmgcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hour" => Ok(RollupLevel::Hour),
            "day" => Ok(RollupLevel::Day),
            "month" => Ok(RollupLevel::Month),
            "year" => Ok(RollupLevel::Year),
            _ => Err(MmgcError::invalid(format!("unknown time level {s:?}, expected hour, day, month or year"))),
        }
    }
}

fn civil(ts: Timestamp) -> NaiveDate {
    DateTime::<Utc>::from_timestamp_millis(ts).map_or(NaiveDate::MIN, |d| d.date_naive())
}

fn month_start(year: i32, month: u32) -> Timestamp {
    Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0).single().map_or(Timestamp::MAX, |d| d.timestamp_millis())
}

/// RFC 3339 rendering of a millisecond timestamp.
pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp_millis(ts)
        .map_or_else(|| ts.to_string(), |d| d.to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(text: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(text).unwrap().timestamp_millis()
    }

    #[test]
    fn hour_and_day() {
        let ts = ms("2016-04-12T02:48:00Z");
        assert_eq!(RollupLevel::Hour.floor(ts), ms("2016-04-12T02:00:00Z"));
        assert_eq!(RollupLevel::Hour.next_boundary(ts), ms("2016-04-12T03:00:00Z"));
        assert_eq!(RollupLevel::Hour.next_boundary(ms("2016-04-12T03:00:00Z")), ms("2016-04-12T04:00:00Z"));
        assert_eq!(RollupLevel::Day.floor(ts), ms("2016-04-12T00:00:00Z"));
        assert_eq!(RollupLevel::Hour.floor(-1), -HOUR_MS);
    }

    #[test]
    fn month_and_year_follow_the_calendar() {
        let ts = ms("2016-02-29T23:59:59Z");
        assert_eq!(RollupLevel::Month.floor(ts), ms("2016-02-01T00:00:00Z"));
        assert_eq!(RollupLevel::Month.next_boundary(ts), ms("2016-03-01T00:00:00Z"));
        assert_eq!(RollupLevel::Month.next_boundary(ms("2016-12-05T00:00:00Z")), ms("2017-01-01T00:00:00Z"));
        assert_eq!(RollupLevel::Year.floor(ts), ms("2016-01-01T00:00:00Z"));
        assert_eq!(RollupLevel::Year.next_boundary(ts), ms("2017-01-01T00:00:00Z"));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!("HOUR".parse::<RollupLevel>().unwrap(), RollupLevel::Hour);
        assert!("week".parse::<RollupLevel>().is_err());
        assert_eq!(format_timestamp(0), "1970-01-01T00:00:00.000Z");
    }
}
