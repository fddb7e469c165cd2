//! Synthetic flood scenes with analytic truth.
//!
//! A tilted parabolic valley runs west to east along the middle row. The
//! flood is the 4-connected part of `{z < w}` reachable from the western end
//! of the centerline, at a flat water level `w`. Backscatter is two-valued in
//! dB and speckled with unit-mean Gamma noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::depth::{CrossSection, DepthField};
use crate::error::{Error, Result};
use crate::metrics::{write_watermarks, Watermark};
use crate::raster::{code, label_cells, write_mask, write_raster, BinaryMask, Connectivity, Geometry, Raster, RasterFormat};

// Independent random streams drawn from one seed.
const STREAM_TERRAIN: u64 = 1;
const STREAM_FLOOD_SPECKLE: u64 = 2;
const STREAM_REFERENCE_SPECKLE: u64 = 3;
const STREAM_WATERMARKS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub grid: GridSpec,
    pub terrain: TerrainSpec,
    pub flood: FloodSpec,
    pub radar: RadarSpec,
    #[serde(default)]
    pub permanent_water: Option<PermanentWaterSpec>,
    #[serde(default)]
    pub exclusion: Option<ExclusionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    #[serde(default)]
    pub origin_x: f64,
    #[serde(default)]
    pub origin_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    /// Elevation of the valley floor at the western edge (m).
    #[serde(default)]
    pub floor: f64,
    /// Rise per meter eastward.
    #[serde(default)]
    pub tilt: f64,
    /// Height of the parabola at `half_width` from the centerline (m).
    pub valley_depth: f64,
    pub half_width: f64,
    /// Peak amplitude of the smooth noise (m); zero disables it.
    #[serde(default)]
    pub noise_amplitude: f64,
    /// Node spacing of the noise lattice (m).
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_noise_scale() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloodSpec {
    /// Flat water-surface elevation (m).
    pub water_level: f64,
    /// Number of watermark points sampled from truth; zero writes none.
    #[serde(default)]
    pub watermarks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSpec {
    pub water_db: f64,
    pub land_db: f64,
    pub looks: f64,
    /// Blend class-boundary cells to the mid dB value.
    #[serde(default)]
    pub transition: bool,
}

/// Channel dark in both acquisitions, centered on the valley axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermanentWaterSpec {
    pub half_width: f64,
}

/// Column band `[col_start, col_end)` flagged as excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionSpec {
    pub col_start: usize,
    pub col_end: usize,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| e.to_string())?;
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|m| Error::parse(path, m))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let g = &self.grid;
        Geometry::with_origin(g.width, g.height, g.cell_size, g.origin_x, g.origin_y)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        let r = &self.radar;
        if !(r.water_db < r.land_db) {
            return Err(Error::invalid(format!(
                "water must be darker than land ({} dB vs {} dB)",
                r.water_db, r.land_db
            )));
        }
        if !(r.looks > 0.0) {
            return Err(Error::invalid("looks must be positive"));
        }
        let t = &self.terrain;
        if !(t.half_width > 0.0) || !(t.noise_scale > 0.0) || t.noise_amplitude < 0.0 {
            return Err(Error::invalid("terrain half_width and noise_scale must be positive"));
        }
        if let Some(ex) = &self.exclusion {
            if ex.col_start >= ex.col_end || ex.col_end > self.grid.width {
                return Err(Error::invalid("exclusion strip outside the grid"));
            }
        }
        Ok(())
    }

    /// Row of the valley axis.
    pub fn center_row(&self) -> usize {
        self.grid.height / 2
    }

    /// A 256 x 256 valley at 10 m with water at -18 dB, land at -8 dB, four looks
    /// and a permanent channel.
    pub fn standard(seed: u64) -> SceneSpec {
        SceneSpec {
            seed,
            grid: GridSpec {
                width: 256,
                height: 256,
                cell_size: 10.0,
                origin_x: 0.0,
                origin_y: 0.0,
            },
            terrain: TerrainSpec {
                floor: 0.0,
                tilt: 0.001,
                valley_depth: 10.0,
                half_width: 1280.0,
                noise_amplitude: 0.2,
                noise_scale: 200.0,
            },
            flood: FloodSpec {
                water_level: 4.0,
                watermarks: 0,
            },
            radar: RadarSpec {
                water_db: -18.0,
                land_db: -8.0,
                looks: 4.0,
                transition: false,
            },
            permanent_water: Some(PermanentWaterSpec { half_width: 60.0 }),
            exclusion: None,
        }
    }
}

/// Seeded smooth noise: uniform values on a coarse lattice, bilinearly interpolated.
struct NoiseLattice {
    nodes: Vec<f64>,
    cols: usize,
    spacing: f64,
}

impl NoiseLattice {
    fn new(extent_x: f64, extent_y: f64, spacing: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> Self {
        let cols = (extent_x / spacing).ceil() as usize + 2;
        let rows = (extent_y / spacing).ceil() as usize + 2;
        let nodes = (0..cols * rows)
            .map(|_| if amplitude > 0.0 { rng.random_range(-amplitude..=amplitude) } else { 0.0 })
            .collect();
        NoiseLattice { nodes, cols, spacing }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.spacing, y / self.spacing);
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let (fu, fv) = (u - i as f64, v - j as f64);
        let n = |a: usize, b: usize| self.nodes[b * self.cols + a];
        let top = n(i, j) * (1.0 - fu) + n(i + 1, j) * fu;
        let bottom = n(i, j + 1) * (1.0 - fu) + n(i + 1, j + 1) * fu;
        top * (1.0 - fv) + bottom * fv
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `z = floor + tilt·x + valley_depth·(d / half_width)² + noise`, with `x`
/// eastward from the western edge and `d` the distance to the axis.
pub fn generate_dem(spec: &SceneSpec) -> Result<Raster> {
    spec.validate()?;
    let g = spec.geometry()?;
    let t = &spec.terrain;
    let cs = g.cell_size;
    let axis_y = (spec.center_row() as f64 + 0.5) * cs;
    let noise = NoiseLattice::new(
        g.width as f64 * cs,
        g.height as f64 * cs,
        t.noise_scale,
        t.noise_amplitude,
        &mut rng(spec.seed, STREAM_TERRAIN),
    );
    Ok(Raster::from_fn(g, |row, col| {
        let x = (col as f64 + 0.5) * cs;
        let y = (row as f64 + 0.5) * cs;
        let d = (y - axis_y) / t.half_width;
        Some(t.floor + t.tilt * x + t.valley_depth * d * d + noise.at(x, y))
    }))
}

/// Cells of `{z < w}` 4-connected to `seed`, with depth `w − z` on them.
pub fn flat_fill_truth(dem: &Raster, water_level: f64, seed: (usize, usize)) -> Result<(BinaryMask, DepthField)> {
    let g = *dem.geometry();
    let z0 = dem
        .at(seed.0, seed.1)
        .ok_or_else(|| Error::invalid("flood seed on nodata"))?;
    if !(f64::from(z0) < water_level) {
        return Err(Error::invalid(format!(
            "flood seed elevation {z0} is not below the water level {water_level}"
        )));
    }
    let below = |i: usize| dem.get(i).is_some_and(|z| f64::from(z) < water_level);
    let labels = label_cells(&g, below, Connectivity::Four);
    let target = labels.label(g.index(seed.0, seed.1));
    let mask = BinaryMask::from_fn(g, |row, col| {
        let i = g.index(row, col);
        if dem.get(i).is_none() {
            code::NODATA
        } else if labels.label(i) == target {
            code::FLOODED
        } else {
            code::DRY
        }
    })?;
    let wse: Vec<Option<f64>> = (0..g.len())
        .map(|i| mask.is_flooded(i).then_some(water_level))
        .collect();
    Ok((mask.clone(), DepthField::from_wse(dem, &wse)))
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise-free backscatter: `water_db` on `water`, `land_db` elsewhere, in linear units.
pub fn render_backscatter(water: &BinaryMask, radar: &RadarSpec) -> Raster {
    let g = *water.geometry();
    let mid = 0.5 * (radar.water_db + radar.land_db);
    Raster::from_fn(g, |row, col| {
        let i = g.index(row, col);
        if water.is_nodata(i) {
            return None;
        }
        let wet = water.is_flooded(i);
        let edge = radar.transition
            && g.neighbors4(row, col)
                .any(|(r, c)| !water.is_nodata(g.index(r, c)) && water.is_flooded(g.index(r, c)) != wet);
        let db = if edge {
            mid
        } else if wet {
            radar.water_db
        } else {
            radar.land_db
        };
        Some(db_to_linear(db))
    })
}

/// `I = R · S` with `S ~ Gamma(shape = L, scale = 1/L)` i.i.d.; infinite looks
/// return `R` unchanged.
pub fn apply_speckle(clean: &Raster, looks: f64, seed: u64) -> Result<Raster> {
    speckle_stream(clean, looks, seed, 0)
}

fn speckle_stream(clean: &Raster, looks: f64, seed: u64, stream: u64) -> Result<Raster> {
    if !(looks > 0.0) {
        return Err(Error::invalid(format!("looks must be positive, got {looks}")));
    }
    if looks.is_infinite() {
        return Ok(clean.clone());
    }
    let gamma = Gamma::new(looks, 1.0 / looks).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng(seed, stream);
    Ok(clean.map_valid(|_, r| f64::from(r) * gamma.sample(&mut rng)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub dem: Raster,
    pub truth_mask: BinaryMask,
    pub truth_depth: DepthField,
    pub clean_backscatter: Raster,
    pub flood_intensity: Raster,
    pub reference_intensity: Raster,
    pub permanent_water: Option<BinaryMask>,
    pub exclusion: Option<BinaryMask>,
    pub watermarks: Vec<Watermark>,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let dem = generate_dem(spec)?;
    let g = *dem.geometry();
    let (truth_mask, truth_depth) = flat_fill_truth(&dem, spec.flood.water_level, (spec.center_row(), 0))?;

    let permanent_water = spec.permanent_water.as_ref().map(|pw| {
        let axis_y = (spec.center_row() as f64 + 0.5) * g.cell_size;
        BinaryMask::from_fn(g, |row, _| {
            let y = (row as f64 + 0.5) * g.cell_size;
            if (y - axis_y).abs() <= pw.half_width {
                code::FLOODED
            } else {
                code::DRY
            }
        })
        .expect("valid codes")
    });
    let exclusion = spec.exclusion.as_ref().map(|ex| {
        BinaryMask::from_fn(g, |_, col| {
            if (ex.col_start..ex.col_end).contains(&col) {
                code::FLOODED
            } else {
                code::DRY
            }
        })
        .expect("valid codes")
    });

    // Permanent water is water in both acquisitions.
    let mut flood_water = truth_mask.clone();
    let mut reference_water = BinaryMask::filled(g, code::DRY);
    if let Some(pw) = &permanent_water {
        for i in pw.flooded_indices() {
            flood_water.set(i, code::FLOODED);
            reference_water.set(i, code::FLOODED);
        }
    }
    let clean_backscatter = render_backscatter(&flood_water, &spec.radar);
    let reference_clean = render_backscatter(&reference_water, &spec.radar);
    let flood_intensity = speckle_stream(&clean_backscatter, spec.radar.looks, spec.seed, STREAM_FLOOD_SPECKLE)?;
    let reference_intensity = speckle_stream(&reference_clean, spec.radar.looks, spec.seed, STREAM_REFERENCE_SPECKLE)?;

    let mut watermarks = Vec::new();
    if spec.flood.watermarks > 0 {
        let wet: Vec<usize> = truth_mask.flooded_indices().collect();
        let mut r = rng(spec.seed, STREAM_WATERMARKS);
        for _ in 0..spec.flood.watermarks {
            let i = wet[r.random_range(0..wet.len())];
            let (row, col) = g.row_col(i);
            let (x, y) = g.cell_center(row, col);
            watermarks.push(Watermark {
                x,
                y,
                observed_depth_m: f64::from(truth_depth.depth.get(i).expect("flooded cell has depth")),
            });
        }
    }

    Ok(SyntheticScene {
        spec: spec.clone(),
        dem,
        truth_mask,
        truth_depth,
        clean_backscatter,
        flood_intensity,
        reference_intensity,
        permanent_water,
        exclusion,
        watermarks,
    })
}

impl SyntheticScene {
    /// Two north-south sections at one and two thirds of the valley length,
    /// spanning the full grid height.
    pub fn default_sections(&self) -> Vec<CrossSection> {
        let g = self.dem.geometry();
        [g.width / 3, 2 * g.width / 3]
            .iter()
            .map(|&col| {
                let (x, top) = g.cell_center(0, col);
                let (_, bottom) = g.cell_center(g.height - 1, col);
                CrossSection::new(vec![(x, top), (x, bottom)]).expect("two finite vertices")
            })
            .collect()
    }

    /// Writes every layer into `dir` and returns the file names written.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fbr = RasterFormat::FlatBinary;
        let mut written = Vec::new();
        let mut raster = |name: &str, r: &Raster| -> Result<()> {
            write_raster(r, &dir.join(name), fbr)?;
            written.push(name.to_string());
            Ok(())
        };
        raster("dem.fbr", &self.dem)?;
        raster("truth_depth.fbr", &self.truth_depth.depth)?;
        raster("clean_backscatter.fbr", &self.clean_backscatter)?;
        raster("flood_intensity.fbr", &self.flood_intensity)?;
        raster("reference_intensity.fbr", &self.reference_intensity)?;
        let mut mask = |name: &str, m: &BinaryMask| -> Result<()> {
            write_mask(m, &dir.join(name), fbr)?;
            written.push(name.to_string());
            Ok(())
        };
        mask("truth_mask.fbr", &self.truth_mask)?;
        if let Some(pw) = &self.permanent_water {
            mask("permanent_water.fbr", pw)?;
        }
        if let Some(ex) = &self.exclusion {
            mask("exclusion.fbr", ex)?;
        }
        let sections: String = self
            .default_sections()
            .iter()
            .map(|s| {
                let pts: Vec<String> = s.vertices.iter().map(|(x, y)| format!("{x},{y}")).collect();
                pts.join(";") + "\n"
            })
            .collect();
        crate::raster::write_atomic(&dir.join("sections.txt"), sections.as_bytes())?;
        written.push("sections.txt".into());
        if !self.watermarks.is_empty() {
            write_watermarks(&self.watermarks, &dir.join("watermarks.csv"))?;
            written.push("watermarks.csv".into());
        }
        Ok(written)
    }
}
