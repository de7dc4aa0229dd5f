//! Browser bindings: force-curve plot, instance solving with a chosen
//! variant, and simulation frames. Every export returns an SVG or JSON
//! string.

use serde_json::json;
use wasm_bindgen::prelude::*;

use nbody_tsp::baselines::{exact_held_karp, nearest_neighbor};
use nbody_tsp::bench::config_for;
use nbody_tsp::instances::{att48, gen_grid, gen_random_uniform};
use nbody_tsp::ljf::{canonical_from_shape, shape_from_canonical, LjfShape};
use nbody_tsp::render::{render_ljf_svg, render_tour_svg, render_trace_svgs, RenderSpec};
use nbody_tsp::sim::{self, Variant};
use nbody_tsp::tour::percent_error;
use nbody_tsp::CityInstance;

const MAX_FRAMES: u64 = 60;

fn load(kind: &str, size: usize, seed: u64) -> Result<CityInstance, String> {
    match kind {
        "grid" => gen_grid(size, size).map_err(|e| e.to_string()),
        "random" => gen_random_uniform(size, seed).map_err(|e| e.to_string()),
        "att48" => Ok(att48()),
        other => Err(format!("unknown instance kind '{other}'")),
    }
}

/// SVG plot of `F(r)` together with its derived parameters as JSON.
pub fn ljf_plot(l: f64, r_min: f64, m: f64, delta: f64) -> Result<String, String> {
    let shape = LjfShape::new(l, r_min, m, delta).map_err(|e| e.to_string())?;
    let canonical = canonical_from_shape(&shape).map_err(|e| e.to_string())?;
    let summary = shape_from_canonical(&canonical);
    let spec = RenderSpec { width: 520, height: 320, point_radius: 0.0, ..RenderSpec::default() };
    let svg = render_ljf_svg(&shape, (4.0 * r_min).max(summary.r_infl * 1.5), &spec).map_err(|e| e.to_string())?;
    Ok(json!({
        "svg": svg,
        "q": canonical.q(),
        "p": canonical.p(),
        "ln_g": canonical.ln_g(),
        "ln_h": canonical.ln_h(),
        "r_infl": summary.r_infl,
    })
    .to_string())
}

/// Runs one simulation and returns the tour picture, costs and, when
/// `frames` is set, up to 60 snapshot pictures.
pub fn solve(kind: &str, size: usize, seed: u64, variant: &str, frames: bool) -> Result<String, String> {
    let inst = load(kind, size, seed)?;
    let mut cfg = config_for(inst.name());
    cfg.variant = variant.parse::<Variant>().map_err(|e| e.to_string())?;
    if frames {
        cfg.snapshot_stride = 200;
    }
    let out = sim::run(&inst, &cfg, seed).map_err(|e| e.to_string())?;
    let reference = match inst.optimal_cost() {
        Some(c) => Some(c),
        None if inst.len() <= 13 => exact_held_karp(&inst).ok().map(|t| t.cost()),
        None => None,
    };
    let nn = nearest_neighbor(&inst, 0).map_err(|e| e.to_string())?.cost();
    let spec = RenderSpec { width: 420, height: 420, ..RenderSpec::default() };
    let tour_svg = render_tour_svg(&inst, &out.tour, &spec).map_err(|e| e.to_string())?;
    let frame_svgs: Vec<String> = if frames && !out.trace.is_empty() {
        let stride = (out.trace.len() as u64).div_ceil(MAX_FRAMES).max(1) as usize;
        let fspec = RenderSpec { stride, point_radius: 3.0, ..spec.clone() };
        render_trace_svgs(&out.trace, &fspec).map_err(|e| e.to_string())?.into_iter().map(|f| f.1).collect()
    } else {
        Vec::new()
    };
    Ok(json!({
        "instance": inst.name(),
        "n": inst.len(),
        "variant": cfg.variant.as_str(),
        "cost": out.tour.cost(),
        "optimal": reference,
        "percent_error": reference.and_then(|r| percent_error(out.tour.cost(), r).ok()),
        "nn_cost": nn,
        "steps": out.steps,
        "converged": out.converged,
        "order": out.tour.order(),
        "tour_svg": tour_svg,
        "frames": frame_svgs,
    })
    .to_string())
}

#[wasm_bindgen(js_name = ljfPlot)]
pub fn ljf_plot_js(l: f64, r_min: f64, m: f64, delta: f64) -> Result<String, JsError> {
    ljf_plot(l, r_min, m, delta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solve)]
pub fn solve_js(kind: &str, size: usize, seed: u64, variant: &str, frames: bool) -> Result<String, JsError> {
    solve(kind, size, seed, variant, frames).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_reports_exponents() {
        let v: serde_json::Value = serde_json::from_str(&ljf_plot(1.0, 1.5, 1.0, 2.0).unwrap()).unwrap();
        assert!(v["svg"].as_str().unwrap().starts_with("<?xml"));
        assert!((v["q"].as_f64().unwrap() - v["p"].as_f64().unwrap() - 2.0).abs() < 1e-12);
        assert!(ljf_plot(1.0, 0.5, 1.0, 2.0).is_err());
    }

    #[test]
    fn solve_grid_bubble() {
        let v: serde_json::Value = serde_json::from_str(&solve("grid", 4, 0, "bubble", true).unwrap()).unwrap();
        assert_eq!(v["cost"].as_f64().unwrap(), 16.0);
        assert_eq!(v["percent_error"].as_f64().unwrap(), 0.0);
        let frames = v["frames"].as_array().unwrap();
        assert!(!frames.is_empty() && frames.len() as u64 <= MAX_FRAMES + 1);
    }

    #[test]
    fn solve_random_has_reference() {
        let v: serde_json::Value = serde_json::from_str(&solve("random", 9, 3, "simple", false).unwrap()).unwrap();
        assert!(v["percent_error"].as_f64().unwrap() >= 0.0);
        assert!(v["frames"].as_array().unwrap().is_empty());
        assert!(solve("torus", 4, 0, "simple", false).is_err());
        assert!(solve("grid", 4, 0, "fast", false).is_err());
    }
}
