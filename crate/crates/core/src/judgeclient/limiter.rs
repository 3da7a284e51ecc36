use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

/// Client-side request pacing: a token bucket holding up to `burst`
/// requests, refilled at `per_minute` requests per minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    burst: u32,
    /// Theoretical arrival time of the next request.
    tat: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32, burst: u32) -> Self {
        assert!(per_minute > 0, "rate must be positive");
        Self {
            interval: Duration::from_secs_f64(60.0 / f64::from(per_minute)),
            burst: burst.max(1),
            tat: Mutex::new(None),
        }
    }

    /// Waits until a request may be sent.
    pub async fn acquire(&self) {
        let wait = {
            let mut tat = self.tat.lock().await;
            let now = Instant::now();
            let next = tat.map_or(now, |t| t.max(now));
            let slack = self.interval * (self.burst - 1);
            let start = next.checked_sub(slack).unwrap_or(now).max(now);
            *tat = Some(next + self.interval);
            start - now
        };
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn paces_after_burst() {
        let limiter = RateLimiter::new(600, 2); // one every 100 ms
        let t0 = Instant::now();
        limiter.acquire().await;
        limiter.acquire().await;
        assert!(t0.elapsed() < Duration::from_millis(1));
        limiter.acquire().await;
        assert!(t0.elapsed() >= Duration::from_millis(100));
        limiter.acquire().await;
        assert!(t0.elapsed() >= Duration::from_millis(200));
    }
}
