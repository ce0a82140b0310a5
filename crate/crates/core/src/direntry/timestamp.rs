use std::fmt;

use serde::{Deserialize, Serialize};

/// A packed 32-bit DOS date-time as stored in file entries.
///
/// The high word is the date (years since 1980 in bits 15-9, month in 8-5,
/// day in 4-0), the low word the time (hours in bits 15-11, minutes in
/// 10-5, two-second units in 4-0). Comparing raw values orders timestamps
/// chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DosTimestamp {
    pub raw: u32,
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
    /// False when a field is outside its calendar range.
    pub plausible: bool,
}

impl DosTimestamp {
    pub fn decode(raw: u32) -> Self {
        let date = (raw >> 16) as u16;
        let time = raw as u16;
        let year = 1980 + (date >> 9);
        let month = ((date >> 5) & 0x0F) as u8;
        let day = (date & 0x1F) as u8;
        let hour = (time >> 11) as u8;
        let minute = ((time >> 5) & 0x3F) as u8;
        let second = ((time & 0x1F) * 2) as u8;
        let plausible = (1..=12).contains(&month) && (1..=31).contains(&day) && hour < 24 && minute < 60 && second < 60;
        DosTimestamp {
            raw,
            year,
            month,
            day,
            hour,
            minute,
            second,
            plausible,
        }
    }

    /// Packs calendar fields. Seconds are rounded down to the two-second
    /// resolution; years outside 1980..=2107 are clamped.
    pub fn encode(year: u16, month: u8, day: u8, hour: u8, minute: u8, second: u8) -> Self {
        let y = year.clamp(1980, 2107) - 1980;
        let date = (y << 9) | (u16::from(month & 0x0F) << 5) | u16::from(day & 0x1F);
        let time = (u16::from(hour & 0x1F) << 11) | (u16::from(minute & 0x3F) << 5) | u16::from((second / 2) & 0x1F);
        Self::decode((u32::from(date) << 16) | u32::from(time))
    }

    pub fn from_datetime(dt: &chrono::NaiveDateTime) -> Self {
        use chrono::{Datelike, Timelike};
        Self::encode(
            dt.year().clamp(1980, 2107) as u16,
            dt.month() as u8,
            dt.day() as u8,
            dt.hour() as u8,
            dt.minute() as u8,
            dt.second() as u8,
        )
    }
}

impl fmt::Display for DosTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )?;
        if !self.plausible {
            write!(f, " (implausible)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Field extraction written with division and remainder instead of
    /// shifts and masks.
    fn oracle(raw: u32) -> (u32, u32, u32, u32, u32, u32) {
        let date = raw / 65536;
        let time = raw % 65536;
        (
            1980 + date / 512,
            (date / 32) % 16,
            date % 32,
            time / 2048,
            (time / 32) % 64,
            (time % 32) * 2,
        )
    }

    #[test]
    fn decodes_entry_creation_stamp() {
        // bytes 27 4B 3E 49 at file-entry offset 0x08
        let raw = u32::from_le_bytes([0x27, 0x4B, 0x3E, 0x49]);
        assert_eq!(raw, 0x493E_4B27);
        assert_eq!(oracle(raw), (2016, 9, 30, 9, 25, 14));
        let ts = DosTimestamp::decode(raw);
        assert_eq!(ts.to_string(), "2016-09-30 09:25:14");
        assert!(ts.plausible);
    }

    #[test]
    fn epoch() {
        let ts = DosTimestamp::decode(0x0021_0000);
        assert_eq!(ts.to_string(), "1980-01-01 00:00:00");
    }

    #[test]
    fn implausible_is_flagged() {
        let ts = DosTimestamp::decode(0x0000_0088);
        assert!(!ts.plausible);
        assert!(ts.to_string().ends_with("(implausible)"));
    }

    #[test]
    fn reencode_roundtrip() {
        let ts = DosTimestamp::decode(0x493E_4B27);
        let again = DosTimestamp::encode(ts.year, ts.month, ts.day, ts.hour, ts.minute, ts.second);
        assert_eq!(again.raw, 0x493E_4B27);
    }

    proptest::proptest! {
        #[test]
        fn decode_matches_oracle(raw in proptest::num::u32::ANY) {
            let ts = DosTimestamp::decode(raw);
            let o = oracle(raw);
            proptest::prop_assert_eq!(
                (u32::from(ts.year), u32::from(ts.month), u32::from(ts.day), u32::from(ts.hour), u32::from(ts.minute), u32::from(ts.second)),
                o
            );
        }

        #[test]
        fn encode_decode_roundtrip(raw in proptest::num::u32::ANY) {
            let ts = DosTimestamp::decode(raw);
            let again = DosTimestamp::encode(ts.year, ts.month, ts.day, ts.hour, ts.minute, ts.second);
            proptest::prop_assert_eq!(again.raw, raw);
        }
    }
}
