use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by every request issued through one client.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    refilled_at: Instant,
}

impl RateLimiter {
    /// `burst` requests may go out back to back; the long-run rate is
    /// `per_minute`.
    pub fn new(per_minute: u32, burst: u32) -> Self {
        let capacity = burst.max(1) as f64;
        Self {
            capacity,
            per_second: per_minute.max(1) as f64 / 60.0,
            state: Mutex::new(Bucket {
                tokens: capacity,
                refilled_at: Instant::now(),
            }),
        }
    }

    /// Burst of one second's worth of requests.
    pub fn per_minute(per_minute: u32) -> Self {
        Self::new(per_minute, per_minute.div_ceil(60))
    }

    /// Takes a token if one is available, otherwise returns the wait until
    /// the next one.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut b = self.state.lock().expect("rate limiter lock");
        let now = Instant::now();
        let elapsed = now.duration_since(b.refilled_at).as_secs_f64();
        b.tokens = (b.tokens + elapsed * self.per_second).min(self.capacity);
        b.refilled_at = now;
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - b.tokens) / self.per_second))
        }
    }

    pub async fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            tokio::time::sleep(wait).await;
        }
    }
}
