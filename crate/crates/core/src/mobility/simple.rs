//! CityMob Simple model: constant-heading motion along a street with
//! toroidal wrap at the area boundary. No semaphores, no turns.

use rand::Rng;

use super::{MobilityConfig, MobilityError, MobilityModel, TraceBuilder, TraceSet};
use crate::quant::q6;
use crate::rng::vehicle_rng;

pub fn generate_simple(cfg: &MobilityConfig) -> Result<TraceSet, MobilityError> {
    cfg.expect_model(MobilityModel::Simple)?;
    cfg.validate()?;
    let net = &cfg.net;
    let (w, h) = (net.area_width, net.area_height);

    let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
    for v in 0..cfg.n_vehicles {
        let mut rng = vehicle_rng(cfg.seed, v);
        let horizontal = rng.random_bool(0.5);
        // Street line: one of the lattice rows / columns.
        let lanes = if horizontal { cfg.net.blocks_y } else { cfg.net.blocks_x } as u64 + 1;
        let lane = rng.random_range(0..lanes);
        let line = if horizontal {
            q6(lane as f64 * h / cfg.net.blocks_y as f64)
        } else {
            q6(lane as f64 * w / cfg.net.blocks_x as f64)
        };
        let forward = rng.random_bool(0.5);
        let speed = cfg.min_speed + rng.random::<f64>() * (cfg.max_speed - cfg.min_speed);
        let extent = if horizontal { w } else { h };
        let offset = q6(rng.random::<f64>() * extent);

        let start = if horizontal { (offset, line) } else { (line, offset) };
        let mut b = TraceBuilder::new(start, cfg.duration);
        let mut at = offset;
        while !b.is_done() {
            let to_border = if forward { extent - at } else { at };
            if to_border < 1e-4 {
                // At the boundary: re-enter on the opposite edge.
                at = if forward { 0.0 } else { extent };
                let p = if horizontal { (at, line) } else { (line, at) };
                b.jump_to(p);
                continue;
            }
            let border = if forward { extent } else { 0.0 };
            let p = if horizontal { (border, line) } else { (line, border) };
            b.move_to(p, speed);
            at = border;
        }
        vehicles.push(b.finish());
    }

    Ok(TraceSet {
        area_width: w,
        area_height: h,
        duration: cfg.duration,
        vehicles,
        damage_events: Vec::new(),
    })
}
