use serde::{Deserialize, Serialize};

/// What happened to the ego during one transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoEvents {
    pub moved: bool,
    pub timeout: bool,
    pub stalemate: bool,
    pub collision: bool,
    /// Bumper gap to the front agent when it is within the follow distance.
    pub follow_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub time: f64,
    pub speed: f64,
    pub timeout: f64,
    pub stalemate: f64,
    pub collision: f64,
    pub follow: f64,
    pub total: f64,
}

/// Per-step ego reward for driver-type `beta`.
pub fn ego_reward(beta: f64, ev: &EgoEvents) -> RewardBreakdown {
    let on = |flag: bool, v: f64| if flag { v } else { 0.0 };
    let time = -0.05 * beta - 0.15;
    let speed = on(ev.moved, 0.5 * beta + 1.5);
    let timeout = on(ev.timeout, -5.0 * beta - 20.0);
    let stalemate = on(ev.stalemate, -0.5 * beta - 1.5);
    let collision = on(ev.collision, -5.0 * beta - 45.0);
    let follow = ev.follow_gap.map_or(0.0, |d| -2.0 + 2.0 / (1.0 + (-d).exp()));
    RewardBreakdown {
        time,
        speed,
        timeout,
        stalemate,
        collision,
        follow,
        total: time + speed + timeout + stalemate + collision + follow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let hit = EgoEvents { collision: true, ..Default::default() };
        assert!((ego_reward(1.0, &hit).collision + 50.0).abs() < 1e-12);
        let late = EgoEvents { timeout: true, ..Default::default() };
        assert!((ego_reward(-1.0, &late).timeout + 15.0).abs() < 1e-12);
        let close = EgoEvents { follow_gap: Some(0.0), ..Default::default() };
        assert!((ego_reward(0.0, &close).follow + 1.0).abs() < 1e-12);
        let cruise = EgoEvents { moved: true, ..Default::default() };
        assert!((ego_reward(0.0, &cruise).total - 1.35).abs() < 1e-12);
    }
}
