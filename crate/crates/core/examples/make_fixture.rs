//! Writes the small collage dataset used by the integration and acceptance
//! tests: images, detection-bundle sidecars and a manifest.
//!
//! ```text
//! cargo run -p collage-core --example make_fixture -- crates/core/tests/fixtures/meetings10
//! ```
//!
//! Collages are 3x2 grids of 120 px tiles. In each tile the primary face box
//! is `(x0+35, y0+20, 50, 50)`, the secondary detector's box for the same
//! face is shifted by 3 px, and the name label sits at `(x0+5, y0+100)` with
//! 6 px per character and 4 px between words. Labels stay under 100 px wide
//! so names in neighbouring tiles never fall within merge distance.

use std::path::{Path, PathBuf};

use collage_core::backends::{sidecar_path, DetectionBundle};
use collage_core::fusion::{DetectedFace, Detector};
use collage_core::model::{BoundingBox, Gender, EMBEDDING_DIM};
use collage_core::username::WordToken;
use rand::{Rng, SeedableRng};

const TILE: f64 = 120.0;
const WIDTH: u32 = 360;
const HEIGHT: u32 = 240;

#[derive(Clone, Copy)]
enum Det {
    /// Detected by both: primary age, secondary age and gender.
    Both(f64, f64, Gender),
    /// Primary only, with its age.
    Primary(f64),
    /// Secondary only: age and gender.
    Secondary(f64, Gender),
    /// Both detectors report a gender, and they disagree.
    Conflict(f64, f64),
}

struct Face {
    tile: usize,
    det: Option<Det>,
    /// (identity component, offset)
    emb: Option<(usize, f64)>,
    name: Option<&'static str>,
}

const fn f(tile: usize, det: Det, emb: Option<(usize, f64)>, name: Option<&'static str>) -> Face {
    Face {
        tile,
        det: Some(det),
        emb,
        name,
    }
}

const fn label(tile: usize, name: &'static str) -> Face {
    Face {
        tile,
        det: None,
        emb: None,
        name: Some(name),
    }
}

use Det::*;
use Gender::{Female as F, Male as M};

/// Meeting id, faces, and interface words as (text, x, y).
type Collage = (&'static str, Vec<Face>, Vec<(&'static str, f64, f64)>);

fn collages() -> Vec<Collage> {
    vec![
        (
            "c01",
            vec![
                f(0, Both(30.0, 32.0, F), Some((0, 0.0)), Some("Dana Levi")),
                f(1, Both(40.0, 44.0, M), Some((1, 0.0)), Some("Moshe Cohen")),
                f(2, Primary(10.0), Some((2, 0.0)), Some("iPhone")),
                f(3, Secondary(16.0, M), Some((3, 0.0)), Some("Tal")),
            ],
            vec![("Mute", 10.0, 2.0), ("Participants", 200.0, 2.0)],
        ),
        (
            "c02",
            vec![
                f(0, Both(31.0, 29.0, F), Some((0, 0.05)), Some("Dana Levi")),
                f(1, Both(12.0, 12.0, F), Some((4, 0.0)), Some("Anne Marie Cohen")),
                f(2, Both(70.0, 66.0, M), Some((5, 0.0)), Some("Old Timer")),
            ],
            vec![],
        ),
        (
            "c03",
            vec![
                f(0, Both(42.0, 40.0, M), Some((1, 0.1)), Some("Moshe Cohen")),
                f(1, Both(25.0, 27.0, M), Some((6, 0.0)), Some("Yossi")),
                f(4, Primary(17.0), None, None),
            ],
            vec![],
        ),
        (
            "c04",
            vec![
                f(0, Both(14.0, 10.0, F), Some((4, 0.02)), Some("Anne Marie Cohen")),
                f(1, Both(35.0, 35.0, M), Some((7, 0.0)), Some("Zed")),
                label(2, "Ghost Name"),
            ],
            vec![],
        ),
        (
            "c05",
            vec![
                f(0, Both(29.0, 31.0, F), Some((0, 0.1)), Some("Dana Levi")),
                f(1, Both(20.0, 22.0, F), Some((8, 0.0)), Some("Noa")),
            ],
            vec![],
        ),
        (
            "c06",
            vec![
                f(0, Both(45.0, 47.0, M), Some((9, 0.0)), Some("iPhone")),
                f(1, Both(50.0, 50.0, F), Some((10, 0.0)), Some("Ana Bat Ruth Levi")),
                f(2, Secondary(8.0, M), None, Some("Kid")),
            ],
            vec![("Leave", 300.0, 2.0)],
        ),
        (
            "c07",
            vec![
                f(0, Primary(26.0), None, Some("Yossi")),
                f(1, Both(33.0, 37.0, F), Some((11, 0.0)), None),
            ],
            vec![],
        ),
        (
            "c08",
            vec![
                f(0, Both(36.0, 36.0, M), Some((7, 0.25)), Some("ZK")),
                f(1, Both(60.0, 70.0, M), Some((12, 0.0)), Some("Grandpa Joe")),
            ],
            vec![],
        ),
        (
            "c09",
            vec![
                f(0, Both(34.0, 34.0, M), Some((7, 0.5)), None),
                f(1, Both(64.98, 65.0, F), Some((13, 0.0)), Some("Ora")),
            ],
            vec![],
        ),
        (
            "c10",
            vec![
                f(0, Both(21.0, 23.0, F), Some((8, 0.1)), Some("Noa")),
                f(1, Both(17.02, 17.0, M), None, Some("Q Tip")),
                f(2, Conflict(28.0, 28.0), None, Some("Robin")),
            ],
            vec![],
        ),
    ]
}

fn tile_origin(tile: usize) -> (f64, f64) {
    ((tile % 3) as f64 * TILE, (tile / 3) as f64 * TILE)
}

fn embedding((component, offset): (usize, f64)) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    v[component] = 1.0;
    v[(component + 64) % EMBEDDING_DIM] += offset;
    v
}

fn bundle_for(
    id: &str,
    faces: &[Face],
    ui: &[(&str, f64, f64)],
    score: f64,
    image_embedding: Vec<f64>,
) -> DetectionBundle {
    let mut b = DetectionBundle::empty(id, WIDTH, HEIGHT);
    b.collage_score = Some(score);
    b.embedding_model = Some("dlib-resnet-128".into());
    b.image_embedding = Some(image_embedding);
    for face in faces {
        let (x0, y0) = tile_origin(face.tile);
        let pbox = BoundingBox::new(x0 + 35.0, y0 + 20.0, 50.0, 50.0).unwrap();
        let sbox = BoundingBox::new(x0 + 38.0, y0 + 23.0, 50.0, 50.0).unwrap();
        let emb = face.emb.map(embedding);
        let mut primary = DetectedFace::new(pbox, Detector::PrimaryDetector);
        let mut secondary = DetectedFace::new(sbox, Detector::SecondaryDetector);
        match face.det {
            None => {}
            Some(Both(pa, sa, g)) => {
                primary.age_estimates = vec![pa];
                primary.embedding = emb;
                secondary.age_estimates = vec![sa];
                secondary.gender_estimate = Some(g);
                b.primary_faces.push(primary);
                b.secondary_faces.push(secondary);
            }
            Some(Primary(pa)) => {
                primary.age_estimates = vec![pa];
                primary.embedding = emb;
                b.primary_faces.push(primary);
            }
            Some(Secondary(sa, g)) => {
                secondary.age_estimates = vec![sa];
                secondary.gender_estimate = Some(g);
                secondary.embedding = emb;
                b.secondary_faces.push(secondary);
            }
            Some(Conflict(pa, sa)) => {
                primary.age_estimates = vec![pa];
                primary.gender_estimate = Some(M);
                primary.embedding = emb;
                secondary.age_estimates = vec![sa];
                secondary.gender_estimate = Some(F);
                b.primary_faces.push(primary);
                b.secondary_faces.push(secondary);
            }
        }
        if let Some(name) = face.name {
            let mut x = x0 + 5.0;
            for word in name.split(' ') {
                let w = 6.0 * word.chars().count() as f64;
                b.word_tokens.push(WordToken {
                    text: word.into(),
                    bbox: BoundingBox::new(x, y0 + 100.0, w, 10.0).unwrap(),
                    confidence: Some(0.9),
                });
                x += w + 4.0;
            }
        }
    }
    for &(word, x, y) in ui {
        b.word_tokens.push(WordToken {
            text: word.into(),
            bbox: BoundingBox::new(x, y, 6.0 * word.len() as f64, 10.0).unwrap(),
            confidence: Some(0.95),
        });
    }
    b
}

/// A 9x8 grid of random gray blocks, each 40x30 px, so the downscaled grid
/// is exactly the block values.
fn block_image(seed: u64) -> image::GrayImage {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<u8> = (0..72).map(|_| rng.random()).collect();
    image::GrayImage::from_fn(WIDTH, HEIGHT, |x, y| {
        image::Luma([blocks[(y / 30) as usize * 9 + (x / 40) as usize]])
    })
}

fn unit(dim: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; 16];
    v[dim] = scale;
    v
}

fn write_sidecar(img: &Path, bundle: &DetectionBundle) {
    let mut text = serde_json::to_string_pretty(bundle).unwrap();
    text.push('\n');
    std::fs::write(sidecar_path(img), text).unwrap();
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).expect("usage: make_fixture <output dir>"));
    let images = out.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut manifest = String::new();
    let mut post = |id: &str, source: &str| {
        manifest.push_str(&format!(
            "{{\"post_id\": \"{id}\", \"source\": \"{source}\", \"image_path\": \"images/{id}.png\", \"tags\": [\"#zoommeeting\"]}}\n"
        ));
    };

    let all = collages();
    for (i, (id, faces, ui)) in all.iter().enumerate() {
        let path = images.join(format!("{id}.png"));
        block_image(1000 + i as u64).save(&path).unwrap();
        write_sidecar(&path, &bundle_for(id, faces, ui, 0.97, unit(i, 100.0)));
        post(id, if i % 2 == 0 { "twitter" } else { "instagram" });
    }

    // c11: byte-identical repost of c03
    let c03 = images.join("c03.png");
    let c11 = images.join("c11.png");
    std::fs::copy(&c03, &c11).unwrap();
    write_sidecar(&c11, &bundle_for("c11", &all[2].1, &[], 0.97, unit(2, 100.0)));
    post("c11", "twitter");

    // c12: different pixels, image embedding 5 units from c05's
    let c12 = images.join("c12.png");
    block_image(2000).save(&c12).unwrap();
    let mut emb = unit(4, 100.0);
    emb[5] = 5.0;
    write_sidecar(&c12, &bundle_for("c12", &all[4].1, &[], 0.93, emb));
    post("c12", "instagram");

    // n01: not a collage
    let n01 = images.join("n01.png");
    block_image(3000).save(&n01).unwrap();
    write_sidecar(
        &n01,
        &bundle_for("n01", &[f(0, Primary(40.0), None, None)], &[], 0.1, unit(15, 100.0)),
    );
    post("n01", "other");

    std::fs::write(out.join("manifest.jsonl"), manifest).unwrap();
    println!("wrote fixture to {}", out.display());
}
