use crate::config::TimeOfDay;

const DAY: i64 = 86_400;

/// Simulated wall clock advanced in whole ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clock {
    start: i64,
    now: i64,
    tick_index: u64,
    tick_seconds: u32,
    briefing_time: TimeOfDay,
    tz_offset_minutes: i32,
}

impl Clock {
    pub fn new(start: i64, tick_seconds: u32, briefing_time: TimeOfDay, tz_offset_minutes: i32) -> Self {
        assert!(tick_seconds > 0, "tick_seconds must be positive");
        Clock {
            start,
            now: start,
            tick_index: 0,
            tick_seconds,
            briefing_time,
            tz_offset_minutes,
        }
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn tick_index(&self) -> u64 {
        self.tick_index
    }

    pub fn tick_seconds(&self) -> u32 {
        self.tick_seconds
    }

    pub fn briefing_time(&self) -> TimeOfDay {
        self.briefing_time
    }

    pub fn advance(&mut self) {
        self.tick_index += 1;
        self.now += i64::from(self.tick_seconds);
    }

    fn local(&self, t: i64) -> i64 {
        t + i64::from(self.tz_offset_minutes) * 60
    }

    /// Local seconds after midnight at `t`.
    pub fn local_second_of_day(&self, t: i64) -> u32 {
        self.local(t).rem_euclid(DAY) as u32
    }

    /// Number of briefing times passed since the epoch, in local time.
    /// It increments exactly when the local clock crosses the briefing time.
    pub fn briefing_key(&self, t: i64) -> i64 {
        (self.local(t) - i64::from(self.briefing_time.seconds())).div_euclid(DAY)
    }

    /// Local calendar days since the clock started (0 on the first day).
    pub fn day_index(&self) -> u64 {
        let today = self.local(self.now).div_euclid(DAY);
        let first = self.local(self.start).div_euclid(DAY);
        (today - first).max(0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 2023-11-15 00:00 at UTC+07:00
    const LOCAL_MIDNIGHT: i64 = 1_699_981_200;

    #[test]
    fn briefing_key_changes_at_briefing_time() {
        let clock = Clock::new(LOCAL_MIDNIGHT, 600, TimeOfDay::default(), 420);
        assert_eq!(clock.local_second_of_day(LOCAL_MIDNIGHT), 0);
        let six = LOCAL_MIDNIGHT + 6 * 3600;
        assert_eq!(clock.briefing_key(six - 1) + 1, clock.briefing_key(six));
        assert_eq!(clock.briefing_key(six), clock.briefing_key(six + DAY - 1));
    }

    #[test]
    fn day_index_counts_local_days() {
        let mut clock = Clock::new(LOCAL_MIDNIGHT + 3600, 3600, TimeOfDay::default(), 420);
        assert_eq!(clock.day_index(), 0);
        for _ in 0..22 {
            clock.advance();
        }
        assert_eq!(clock.day_index(), 0);
        clock.advance();
        assert_eq!(clock.day_index(), 1);
        assert_eq!(clock.tick_index(), 23);
    }
}
