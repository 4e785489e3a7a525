//! Time-ordered sensor event stream.

use crate::error::Result;
use crate::filter::{CorrectionReport, Estimator};
use crate::models::{EncoderSample, ImuSample};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Imu(ImuSample),
    Encoder(EncoderSample),
}

impl Event {
    pub fn t(&self) -> f64 {
        match self {
            Event::Imu(s) => s.t,
            Event::Encoder(s) => s.t,
        }
    }

    /// Tie-break rank: IMU before encoder at equal timestamps.
    fn rank(&self) -> u8 {
        match self {
            Event::Imu(_) => 0,
            Event::Encoder(_) => 1,
        }
    }
}

/// Merges two individually time-ordered streams into one. Ties go to the IMU.
pub fn merge_events(imu: &[ImuSample], encoder: &[EncoderSample]) -> Vec<Event> {
    let mut out = Vec::with_capacity(imu.len() + encoder.len());
    let (mut i, mut j) = (0, 0);
    while i < imu.len() || j < encoder.len() {
        let take_imu = match (imu.get(i), encoder.get(j)) {
            (Some(a), Some(b)) => a.t <= b.t,
            (Some(_), None) => true,
            _ => false,
        };
        if take_imu {
            out.push(Event::Imu(imu[i]));
            i += 1;
        } else {
            out.push(Event::Encoder(encoder[j]));
            j += 1;
        }
    }
    out
}

/// Sorts arbitrary events by `(t, IMU-first)`; stable within equal keys.
pub fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| a.t().total_cmp(&b.t()).then(a.rank().cmp(&b.rank())));
}

impl Estimator {
    /// Feeds one event; returns the correction report for encoder events that
    /// were applied.
    pub fn handle(&mut self, event: &Event) -> Result<Option<CorrectionReport>> {
        match *event {
            Event::Imu(s) => self.handle_imu(s).map(|_| None),
            Event::Encoder(s) => self.handle_encoder(s),
        }
    }
}
