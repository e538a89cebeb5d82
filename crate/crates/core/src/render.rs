//! Flat-shaded raycaster producing RGB, metric depth and instance segmentation.

use std::io::BufWriter;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::layout::{self, colors, Body, ObjectId, Shape, BLOCK, NEEDLE, TISSUE};
use crate::sim::SceneState;

pub const BACKGROUND: i32 = -1;

/// One camera's images. All arrays are row-major `height x width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSet {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    /// Distance along the optical axis in meters; 0 where nothing was hit.
    pub depth: Vec<f32>,
    pub seg: Vec<i32>,
}

impl FrameSet {
    pub fn pixels(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn index(&self, u: u32, v: u32) -> usize {
        (v * self.width + u) as usize
    }

    pub fn write_rgb_png(&self, path: &Path) -> Result<()> {
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
            &self.rgb,
        )
    }

    /// 16-bit depth in millimeters, saturating at 65.535 m.
    pub fn write_depth_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.depth.len() * 2);
        for d in &self.depth {
            let mm = (f64::from(*d) * 1000.0).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&mm.to_be_bytes());
        }
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            &bytes,
        )
    }

    pub fn encode_rgb_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(png_err)?;
            w.write_image_data(&self.rgb).map_err(png_err)?;
        }
        Ok(out)
    }
}

fn png_err(e: png::EncodingError) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_png(
    path: &Path,
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(data).map_err(png_err)?;
    Ok(())
}

#[derive(Clone, Copy, Debug)]
enum Prim {
    Sphere {
        c: Vector3<f64>,
        r: f64,
    },
    Capsule {
        a: Vector3<f64>,
        b: Vector3<f64>,
        r: f64,
    },
    Box {
        pose: Pose,
        half: Vector3<f64>,
    },
    Cylinder {
        pose: Pose,
        r: f64,
        h: f64,
    },
}

#[derive(Clone, Copy, Debug)]
struct Item {
    prim: Prim,
    id: ObjectId,
    color: [u8; 3],
}

/// Items sharing a bounding sphere for early ray rejection.
#[derive(Clone, Debug)]
struct Group {
    center: Vector3<f64>,
    radius: f64,
    items: Vec<Item>,
}

/// Renderable geometry for a scene, independent of the camera.
#[derive(Clone, Debug, Default)]
pub struct RenderScene {
    groups: Vec<Group>,
}

impl RenderScene {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn add_sphere(&mut self, id: ObjectId, center: Vector3<f64>, radius: f64, color: [u8; 3]) {
        self.push_group(vec![Item {
            prim: Prim::Sphere {
                c: center,
                r: radius,
            },
            id,
            color,
        }]);
    }

    pub fn add_body(&mut self, body: &Body) {
        let prim = match body.shape {
            Shape::Box { pose, half } => Prim::Box {
                pose,
                half: Vector3::from(half),
            },
            Shape::Cylinder {
                pose,
                radius,
                height,
            } => Prim::Cylinder {
                pose,
                r: radius,
                h: height,
            },
            Shape::Sphere { center, radius } => Prim::Sphere {
                c: Vector3::from(center),
                r: radius,
            },
            Shape::Capsule { a, b, radius } => Prim::Capsule {
                a: Vector3::from(a),
                b: Vector3::from(b),
                r: radius,
            },
        };
        self.push_group(vec![Item {
            prim,
            id: body.id,
            color: body.color,
        }]);
    }

    fn push_group(&mut self, items: Vec<Item>) {
        if items.is_empty() {
            return;
        }
        let bounds: Vec<(Vector3<f64>, f64)> =
            items.iter().map(|i| bounding_sphere(&i.prim)).collect();
        let center = bounds.iter().map(|b| b.0).sum::<Vector3<f64>>() / bounds.len() as f64;
        let radius = bounds
            .iter()
            .map(|(c, r)| (c - center).norm() + r)
            .fold(0.0, f64::max);
        self.groups.push(Group {
            center,
            radius: radius * 1.0001 + 1e-9,
            items,
        });
    }

    /// Build the stand-in geometry for every body in `scene`.
    pub fn from_scene(scene: &SceneState) -> Self {
        let mut out = RenderScene::default();
        for body in &scene.props.statics {
            out.add_body(body);
        }
        for (&id, pose) in &scene.objects {
            match id {
                NEEDLE => {
                    if let Some(g) = &scene.props.needle {
                        let pts: Vec<Vector3<f64>> =
                            g.features().map(|p| pose.transform_point(&p)).collect();
                        let items = pts
                            .windows(2)
                            .map(|w| Item {
                                prim: Prim::Capsule {
                                    a: w[0],
                                    b: w[1],
                                    r: g.wire_radius,
                                },
                                id,
                                color: colors::NEEDLE,
                            })
                            .collect();
                        out.push_group(items);
                    }
                }
                TISSUE => {
                    let half = layout::TISSUE_HALF;
                    let slab =
                        pose.compose(&Pose::from_translation(Vector3::new(0.0, 0.0, -half[2])));
                    let mut items = vec![Item {
                        prim: Prim::Box {
                            pose: slab,
                            half: Vector3::from(half),
                        },
                        id,
                        color: colors::TISSUE,
                    }];
                    if let Some(m) = scene.props.marker_local {
                        let base = pose
                            .compose(&Pose::from_translation(Vector3::new(m[0], m[1], -0.0001)));
                        items.push(Item {
                            prim: Prim::Cylinder {
                                pose: base,
                                r: 0.0025,
                                h: 0.0004,
                            },
                            id,
                            color: colors::MARKER,
                        });
                    }
                    out.push_group(items);
                }
                BLOCK => out.push_group(vec![Item {
                    prim: Prim::Box {
                        pose: *pose,
                        half: Vector3::from(layout::BLOCK_HALF),
                    },
                    id,
                    color: colors::BLOCK,
                }]),
                _ => {}
            }
        }
        for (i, arm) in scene.arms.iter().enumerate() {
            out.push_group(gripper_items(i, &arm.ee_pose, arm.jaw));
        }
        out
    }
}

/// Shaft leans away from the workspace center so it does not hide the jaws from above.
fn gripper_items(arm: usize, ee: &Pose, jaw: f64) -> Vec<Item> {
    let id = layout::arm_id(arm);
    let lean = if arm == layout::RIGHT_ARM { 0.6 } else { -0.6 };
    let base = ee.transform_point(&Vector3::new(0.0, 0.0, -0.006));
    let top = ee.transform_point(
        &(Vector3::new(0.0, 0.0, -0.006) + Vector3::new(lean, 0.0, -1.0).normalize() * 0.08),
    );
    let half = 0.5 * jaw;
    let len = 0.006;
    let mut items = vec![Item {
        prim: Prim::Capsule {
            a: base,
            b: top,
            r: 0.0025,
        },
        id,
        color: colors::SHAFT,
    }];
    for side in [-1.0, 1.0] {
        let tip = ee.transform_point(&Vector3::new(
            side * len * half.sin(),
            0.0,
            -0.006 + len * half.cos(),
        ));
        items.push(Item {
            prim: Prim::Capsule {
                a: base,
                b: tip,
                r: 0.0008,
            },
            id,
            color: colors::JAW,
        });
    }
    items
}

fn bounding_sphere(p: &Prim) -> (Vector3<f64>, f64) {
    match *p {
        Prim::Sphere { c, r } => (c, r),
        Prim::Capsule { a, b, r } => ((a + b) / 2.0, (b - a).norm() / 2.0 + r),
        Prim::Box { pose, half } => (pose.translation(), half.norm()),
        Prim::Cylinder { pose, r, h } => (
            pose.transform_point(&Vector3::new(0.0, 0.0, h / 2.0)),
            (r * r + h * h / 4.0).sqrt(),
        ),
    }
}

const T_MIN: f64 = 1e-7;

/// Nearest hit along a unit-direction ray: `(t, outward normal)`.
fn intersect(p: &Prim, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    match *p {
        Prim::Sphere { c, r } => {
            let oc = o - c;
            let b = oc.dot(d);
            let cc = oc.dot(&oc) - r * r;
            let h = b * b - cc;
            if h < 0.0 {
                return None;
            }
            let sq = h.sqrt();
            let t = if -b - sq > T_MIN { -b - sq } else { -b + sq };
            (t > T_MIN).then(|| (t, (o + d * t - c) / r))
        }
        Prim::Capsule { a, b, r } => capsule(o, d, &a, &b, r),
        Prim::Box { pose, half } => {
            let lo = pose.inverse_transform_point(o);
            let ld = pose.rotation().inverse() * d;
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut axis = 0;
            let mut sign = 1.0;
            for k in 0..3 {
                if ld[k].abs() < 1e-15 {
                    if lo[k].abs() > half[k] {
                        return None;
                    }
                    continue;
                }
                let t1 = (-half[k] - lo[k]) / ld[k];
                let t2 = (half[k] - lo[k]) / ld[k];
                let (tn, tf, s) = if t1 < t2 {
                    (t1, t2, -1.0)
                } else {
                    (t2, t1, 1.0)
                };
                if tn > t_near {
                    t_near = tn;
                    axis = k;
                    sign = s;
                }
                t_far = t_far.min(tf);
            }
            if t_near > t_far || t_near <= T_MIN {
                return None;
            }
            let mut n = Vector3::zeros();
            n[axis] = sign;
            Some((t_near, pose.rotation() * n))
        }
        Prim::Cylinder { pose, r, h } => {
            let lo = pose.inverse_transform_point(o);
            let ld = pose.rotation().inverse() * d;
            let mut best: Option<(f64, Vector3<f64>)> = None;
            let mut consider = |t: f64, n: Vector3<f64>| {
                if t > T_MIN && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, n));
                }
            };
            let a = ld.x * ld.x + ld.y * ld.y;
            if a > 1e-15 {
                let b = lo.x * ld.x + lo.y * ld.y;
                let c = lo.x * lo.x + lo.y * lo.y - r * r;
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for t in [(-b - sq) / a, (-b + sq) / a] {
                        let z = lo.z + t * ld.z;
                        if (0.0..=h).contains(&z) {
                            let p = lo + ld * t;
                            consider(t, Vector3::new(p.x / r, p.y / r, 0.0));
                        }
                    }
                }
            }
            if ld.z.abs() > 1e-15 {
                for (zc, nz) in [(0.0, -1.0), (h, 1.0)] {
                    let t = (zc - lo.z) / ld.z;
                    let p = lo + ld * t;
                    if p.x * p.x + p.y * p.y <= r * r {
                        consider(t, Vector3::new(0.0, 0.0, nz));
                    }
                }
            }
            best.map(|(t, n)| (t, pose.rotation() * n))
        }
    }
}

fn capsule(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    pa: &Vector3<f64>,
    pb: &Vector3<f64>,
    r: f64,
) -> Option<(f64, Vector3<f64>)> {
    let ba = pb - pa;
    let oa = o - pa;
    let baba = ba.dot(&ba);
    let bard = ba.dot(d);
    let baoa = ba.dot(&oa);
    let rdoa = d.dot(&oa);
    let oaoa = oa.dot(&oa);
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    let mut best: Option<f64> = None;
    if a > 1e-18 {
        let h = b * b - a * c;
        if h >= 0.0 {
            let t = (-b - h.sqrt()) / a;
            let y = baoa + t * bard;
            if y > 0.0 && y < baba && t > T_MIN {
                best = Some(t);
            }
        }
    }
    if best.is_none() {
        // End caps are spheres; take the nearest positive hit of either.
        for end in [pa, pb] {
            let oc = o - end;
            let bb = d.dot(&oc);
            let cc = oc.dot(&oc) - r * r;
            let h = bb * bb - cc;
            if h > 0.0 {
                let t = -bb - h.sqrt();
                if t > T_MIN && best.is_none_or(|bt| t < bt) {
                    best = Some(t);
                }
            }
        }
    }
    best.map(|t| {
        let p = o + d * t;
        let pa_p = p - pa;
        let s = (pa_p.dot(&ba) / baba).clamp(0.0, 1.0);
        (t, (pa_p - ba * s) / r)
    })
}

fn light_dir() -> Vector3<f64> {
    Vector3::new(0.3, -0.4, 1.0).normalize()
}

fn shade(color: [u8; 3], n: &Vector3<f64>, view: &Vector3<f64>) -> [u8; 3] {
    let n = if n.dot(view) > 0.0 { -n } else { *n };
    let k = 0.35 + 0.65 * n.dot(&light_dir()).max(0.0);
    color.map(|c| (f64::from(c) * k).round().clamp(0.0, 255.0) as u8)
}

/// Render prepared geometry through `camera`.
pub fn render_geometry(geometry: &RenderScene, camera: &CameraModel) -> FrameSet {
    let (w, h) = (camera.width, camera.height);
    let n = (w * h) as usize;
    let mut out = FrameSet {
        width: w,
        height: h,
        rgb: vec![0; n * 3],
        depth: vec![0.0; n],
        seg: vec![BACKGROUND; n],
    };
    let origin = camera.pose.translation();
    let rot = camera.pose.rotation();
    for v in 0..h {
        for u in 0..w {
            let ray_cam = camera.pixel_ray(f64::from(u), f64::from(v));
            let scale = ray_cam.norm();
            let dir = rot * (ray_cam / scale);
            let mut best: Option<(f64, Vector3<f64>, &Item)> = None;
            for g in &geometry.groups {
                // Reject groups whose bounding sphere the ray misses.
                let oc = origin - g.center;
                let b = oc.dot(&dir);
                let c = oc.dot(&oc) - g.radius * g.radius;
                if c > 0.0 && (b > 0.0 || b * b < c) {
                    continue;
                }
                for item in &g.items {
                    if let Some((t, nrm)) = intersect(&item.prim, &origin, &dir) {
                        if best.as_ref().is_none_or(|(bt, _, _)| t < *bt) {
                            best = Some((t, nrm, item));
                        }
                    }
                }
            }
            if let Some((t, nrm, item)) = best {
                let i = (v * w + u) as usize;
                out.depth[i] = (t / scale) as f32;
                out.seg[i] = item.id.0;
                out.rgb[i * 3..i * 3 + 3].copy_from_slice(&shade(item.color, &nrm, &dir));
            }
        }
    }
    out
}

/// Render the scene's primitive stand-ins through `camera`.
pub fn render(scene: &SceneState, camera: &CameraModel) -> FrameSet {
    render_geometry(&RenderScene::from_scene(scene), camera)
}
