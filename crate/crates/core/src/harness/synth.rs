//! Small synthetic scene renders for the shipped suite.
//!
//! They are stand-ins for real photos: a lit signal lamp, a meat patch of
//! the right shade, a ripe and an unripe fruit, and so on. Real-model runs
//! should use photographs instead.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::scenario::{Environment, Scenario, ScenarioCase};

pub const WIDTH: u32 = 160;
pub const HEIGHT: u32 = 120;

type Color = Rgb<u8>;

const RED: Color = Rgb([220, 30, 30]);
const GREEN: Color = Rgb([30, 190, 70]);
const UNLIT: Color = Rgb([45, 45, 45]);
const AMBER_UNLIT: Color = Rgb([70, 60, 30]);

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: Color) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

fn fill_circle(img: &mut RgbImage, cx: i64, cy: i64, r: i64, c: Color) {
    for y in (cy - r).max(0)..(cy + r + 1).min(img.height() as i64) {
        for x in (cx - r).max(0)..(cx + r + 1).min(img.width() as i64) {
            if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                img.put_pixel(x as u32, y as u32, c);
            }
        }
    }
}

pub fn render(scenario: Scenario, environment: Environment) -> RgbImage {
    let background = match environment {
        Environment::A => Rgb([170, 200, 225]),
        Environment::B => Rgb([95, 95, 110]),
    };
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, background);
    match (scenario, environment) {
        (Scenario::TrafficLight, env) => {
            fill_rect(&mut img, 62, 8, 36, 104, Rgb([20, 20, 20]));
            let (top, bottom) = match env {
                Environment::A => (UNLIT, GREEN),
                Environment::B => (RED, UNLIT),
            };
            fill_circle(&mut img, 80, 26, 12, top);
            fill_circle(&mut img, 80, 60, 12, AMBER_UNLIT);
            fill_circle(&mut img, 80, 94, 12, bottom);
        }
        (Scenario::MeatDoneness, env) => {
            fill_rect(&mut img, 10, 20, 140, 80, Rgb([60, 60, 60]));
            let meat = match env {
                Environment::A => Rgb([120, 75, 45]),
                Environment::B => Rgb([225, 120, 130]),
            };
            fill_rect(&mut img, 40, 40, 80, 40, meat);
        }
        (Scenario::FruitRipeness, env) => {
            let ripe = Rgb([210, 35, 30]);
            let unripe = Rgb([110, 170, 60]);
            let (left, right) = match env {
                Environment::A => (ripe, unripe),
                Environment::B => (unripe, ripe),
            };
            fill_rect(&mut img, 0, 90, WIDTH, 30, Rgb([140, 100, 60]));
            fill_circle(&mut img, 45, 62, 26, left);
            fill_circle(&mut img, 115, 62, 26, right);
        }
        (Scenario::ClothingCoordination, env) => {
            let shirt = match env {
                Environment::A => Rgb([25, 35, 90]),
                Environment::B => Rgb([110, 115, 45]),
            };
            fill_rect(&mut img, 50, 20, 60, 80, shirt);
            fill_rect(&mut img, 30, 20, 20, 35, shirt);
            fill_rect(&mut img, 110, 20, 20, 35, shirt);
        }
        (Scenario::TransitSigns, env) => {
            let (first, second) = match env {
                Environment::A => (Rgb([245, 140, 20]), Rgb([40, 90, 200])),
                Environment::B => (Rgb([200, 40, 40]), GREEN),
            };
            fill_rect(&mut img, 10, 25, 65, 40, first);
            fill_rect(&mut img, 85, 25, 65, 40, second);
            fill_rect(&mut img, 10, 65, 140, 6, Rgb([240, 240, 240]));
        }
    }
    img
}

/// Renders the image for every case to its `image_path`.
pub fn write_images(cases: &[ScenarioCase], base: &Path) -> image::ImageResult<()> {
    for case in cases {
        let path = base.join(&case.image_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(image::ImageError::IoError)?;
        }
        render(case.scenario, case.environment).save_with_format(&path, image::ImageFormat::Png)?;
    }
    Ok(())
}
