//! Task execution on top of the library, with a content-addressed cache.

use hypscat::fem::{odd_dirichlet_eigenvalues, AnchorSolve, Discretization, NeumannSpectralData};
use hypscat::geometry::SurfaceSpec;
use hypscat::mesh::Mesh;
use hypscat::resonances::{
    cluster, count_by_argument_principle, deflated_find, embedded_scan, newton_find, records_to_csv, resonance_scan, svg_plot, track,
    trajectories_to_csv, NdEvaluator, NewtonOptions, ResonanceRecord, SeedGrid, TrackOptions,
};
use hypscat::scattering::{functional_equation_defect, scattering_matrix, unitarity_defect, InteriorNd, ScatteringOptions};
use hypscat::specialfn::closed_form_c;
use hypscat::{Mat, C64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{points, EigsMode, JobConfig, Route, SurfaceChoice, Task};
use crate::output::{atomic_write, sha256_hex, Artifacts};
use crate::CliError;

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for hypscat::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

/// JSON files named by a content hash; the hash of each artifact feeds the
/// key of the artifacts computed from it.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    pub fn key(parts: &[&str]) -> String {
        sha256_hex(parts.join("\u{1f}").as_bytes())
    }

    fn path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.json"))
    }

    /// Unreadable or stale entries count as misses.
    fn load<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(kind, key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn store<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string(value)?;
        atomic_write(&self.path(kind, key), text.as_bytes())
    }
}

/// Spectral data and anchors as cached together.
#[derive(Serialize, Deserialize)]
struct SeriesArtifact {
    data: NeumannSpectralData,
    anchors: Vec<AnchorSolve>,
}

pub struct Pipeline<'a> {
    pub cfg: &'a JobConfig,
    pub cache: Option<Cache>,
    pub workers: usize,
}

impl Pipeline<'_> {
    fn mesh_key(&self, spec: &SurfaceSpec) -> Result<String, CliError> {
        let m = self.cfg.mesh()?;
        Ok(Cache::key(&[hypscat::VERSION, "mesh", &serde_json::to_string(spec)?, &serde_json::to_string(&m)?]))
    }

    pub fn mesh(&self, spec: &SurfaceSpec) -> Result<(Mesh, String), CliError> {
        let key = self.mesh_key(spec)?;
        if let Some(mesh) = self.cache.as_ref().and_then(|c| c.load::<Mesh>("mesh", &key)) {
            if mesh.check().is_ok() {
                return Ok((mesh, key));
            }
        }
        let m = self.cfg.mesh()?;
        let mut mesh = Mesh::triangulate(spec, m.h, m.n_boundary).stage("mesh")?;
        for _ in 0..m.refinements {
            mesh = mesh.refine().stage("mesh")?;
        }
        if let Some(c) = &self.cache {
            c.store("mesh", &key, &mesh)?;
        }
        Ok((mesh, key))
    }

    fn discretization(&self, mesh: &Mesh) -> Result<Discretization, CliError> {
        let f = self.cfg.fem()?;
        Discretization::new(mesh, f.order, f.j).stage("fem")
    }

    /// Spectral data plus anchor solves, assembling only on a cache miss.
    fn series_artifact(&self, spec: &SurfaceSpec) -> Result<SeriesArtifact, CliError> {
        let (mesh, mesh_key) = self.mesh(spec)?;
        let f = self.cfg.fem()?;
        let key = Cache::key(&[&mesh_key, "series", &serde_json::to_string(f)?]);
        if let Some(a) = self.cache.as_ref().and_then(|c| c.load::<SeriesArtifact>("series", &key)) {
            return Ok(a);
        }
        let disc = self.discretization(&mesh)?;
        let eig = disc.solve_spectrum(f.eigenpairs).stage("fem")?;
        let anchors = self
            .cfg
            .anchors()?
            .into_iter()
            .map(|s0| disc.anchor(s0, &eig.values))
            .collect::<hypscat::Result<Vec<_>>>()
            .stage("fem")?;
        let art = SeriesArtifact { data: disc.spectral_data(&eig), anchors };
        if let Some(c) = &self.cache {
            c.store("series", &key, &art)?;
        }
        Ok(art)
    }

    pub fn interior(&self, surface: &SurfaceChoice) -> Result<InteriorNd, CliError> {
        let spec = self.cfg.surface_spec(surface)?;
        match self.cfg.fem()?.route {
            Route::Series => {
                let art = self.series_artifact(&spec)?;
                InteriorNd::series(art.data, &art.anchors).stage("interior-nd")
            }
            Route::Direct => {
                let (mesh, _) = self.mesh(&spec)?;
                Ok(InteriorNd::direct(self.discretization(&mesh)?))
            }
        }
    }

    pub fn run(&self, task: Task, out: &mut Artifacts) -> Result<(), CliError> {
        match task {
            Task::Surface => self.surface(out),
            Task::Mesh => self.mesh_task(out),
            Task::SpectralData => self.spectral(out),
            Task::ScatterEval => self.scatter(out),
            Task::ResonanceScan => self.resonance_find(out),
            Task::ResonanceCount => self.resonance_count(out),
            Task::ResonanceTrack => self.resonance_track(out),
            Task::EmbeddedScan => self.eigs(out),
            Task::ClosedFormCompare => self.oracle(out).map(|_| ()),
        }
    }

    fn surface(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let spec = self.cfg.surface_spec(&self.cfg.surface)?;
        out.json(
            "surface.json",
            json!({
                "area": spec.area(),
                "cusps": spec.cusp_count(),
                "cut_heights": spec.cut_heights(),
                "reduction_factor": spec.reduction_factor(),
                "spec": spec,
            }),
        )
    }

    fn mesh_task(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let spec = self.cfg.surface_spec(&self.cfg.surface)?;
        let (mesh, key) = self.mesh(&spec)?;
        out.json(
            "mesh.json",
            json!({
                "cache_key": key,
                "vertices": mesh.vertices.len(),
                "triangles": mesh.triangles.len(),
                "dofs": mesh.n_dofs,
                "min_angle_deg": mesh.min_angle_deg(),
                "mesh": mesh,
            }),
        )
    }

    fn spectral(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let spec = self.cfg.surface_spec(&self.cfg.surface)?;
        let art = self.series_artifact(&spec)?;
        let t: Vec<Option<f64>> = art.data.eigenvalues.iter().map(|&l| (l >= 0.25).then(|| (l - 0.25).sqrt())).collect();
        let mut csv = String::from("index,lambda,t\n");
        for (i, (l, t)) in art.data.eigenvalues.iter().zip(&t).enumerate() {
            let t = t.map(|t| format!("{t:.5e}")).unwrap_or_default();
            let _ = writeln!(csv, "{i},{l:.5e},{t}");
        }
        out.csv("spectrum.csv", &csv);
        out.json("spectral.json", json!({"t": t, "anchors": art.anchors.iter().map(|a| pair(a.s0)).collect::<Vec<_>>(), "data": art.data}))
    }

    fn scatter_points(&self) -> Result<Vec<C64>, CliError> {
        let sc = self.cfg.scatter.as_ref().ok_or_else(|| CliError::Config("missing 'scatter' section".into()))?;
        let mut pts = points(&sc.s);
        if let Some(g) = &sc.t {
            pts.extend(g.points()?.into_iter().map(|t| C64::new(0.5, t)));
        }
        if pts.is_empty() {
            return Err(CliError::Config("scatter needs points 's' or a grid 't'".into()));
        }
        Ok(pts)
    }

    fn scatter(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let pts = self.scatter_points()?;
        let delta2 = self.cfg.scatter.as_ref().map_or(0.0, |s| s.delta2);
        let nd = self.interior(&self.cfg.surface)?;
        let a = nd.cut_heights();
        let opts = ScatteringOptions { q_weight: true, require_gap: false };
        let results = par_map(&pts, self.workers, |&s| -> Result<Value, CliError> {
            let r = scattering_matrix(&nd, s, &opts).stage("scatter")?;
            let back = scattering_matrix(&nd, 1.0 - s, &opts).stage("scatter")?;
            let on_line = (s.re - 0.5).abs() < 1e-14;
            Ok(json!({
                "s": pair(s),
                "c": mat_json(&r.c),
                "sigma_p": r.sigma_p,
                "sigma_p1": r.sigma_p1,
                "weak_gap": r.weak_gap,
                "condition": r.condition,
                "error_bound": r.error_bound(delta2, &a).ok(),
                "unitarity_defect": on_line.then(|| unitarity_defect(&r.c)),
                "functional_equation_defect": functional_equation_defect(&r.c, &back.c),
            }))
        })?;
        let mut csv = String::from("re_s,im_s,abs_c00,arg_c00,sigma_p,condition,unitarity_defect\n");
        for v in &results {
            let c00 = C64::new(v["c"][0][0][0].as_f64().unwrap_or(f64::NAN), v["c"][0][0][1].as_f64().unwrap_or(f64::NAN));
            let u = v["unitarity_defect"].as_f64().map(|u| format!("{u:.5e}")).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{u}",
                v["s"][0].as_f64().unwrap_or(f64::NAN),
                v["s"][1].as_f64().unwrap_or(f64::NAN),
                c00.norm(),
                c00.arg(),
                v["sigma_p"].as_f64().unwrap_or(f64::NAN),
                v["condition"].as_f64().unwrap_or(f64::NAN),
            );
        }
        out.csv("scatter.csv", &csv);
        out.json("scatter.json", json!({ "points": results }))
    }

    fn resonance_cfg(&self) -> Result<&crate::config::ResonanceConfig, CliError> {
        self.cfg.resonances.as_ref().ok_or_else(|| CliError::Config("missing 'resonances' section".into()))
    }

    fn resonance_find(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let rc = self.resonance_cfg()?;
        let eval = NdEvaluator::new(self.interior(&self.cfg.surface)?);
        let opts = NewtonOptions::default();
        let seeds = points(&rc.seeds);
        let (mut records, failures) = if seeds.is_empty() {
            let grid = SeedGrid { rect: rc.window, spacing: rc.spacing };
            (resonance_scan(&grid, &eval, &opts, rc.residual_tol).stage("resonances")?, 0)
        } else if rc.cluster_radius.is_some() {
            let (roots, fails) = deflated_find(&seeds, &eval, &opts, rc.max_roots).stage("resonances")?;
            (roots, fails.len())
        } else {
            let mut found = Vec::new();
            let mut fails = 0;
            for &s in &seeds {
                match newton_find(s, &eval, &opts) {
                    Ok(r) if r.residual <= rc.residual_tol => found.push(r),
                    _ => fails += 1,
                }
            }
            (found, fails)
        };
        records = cluster(&records, rc.cluster_radius.unwrap_or(1e-3));
        records.retain(|r| rc.window.contains(r.s));
        records.sort_by(|x, y| x.s.im.total_cmp(&y.s.im));
        out.csv("resonances.csv", &records_to_csv(&records));
        out.svg("resonances.svg", &svg_plot(&records, &[]));
        out.json("resonances.json", json!({ "failed_seeds": failures, "resonances": records_json(&records) }))
    }

    fn resonance_count(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let rc = self.resonance_cfg()?;
        let cc = rc.count.ok_or_else(|| CliError::Config("missing 'resonances.count' section".into()))?;
        let eval = NdEvaluator::new(self.interior(&self.cfg.surface)?);
        let n = count_by_argument_principle(&cc.rectangle, &eval, cc.n_points).stage("count")?;
        out.json("count.json", json!({ "rectangle": cc.rectangle, "count": n }))
    }

    fn resonance_track(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let rc = self.resonance_cfg()?;
        let tc = rc.track.as_ref().ok_or_else(|| CliError::Config("missing 'resonances.track' section".into()))?;
        let opts = TrackOptions { max_order: tc.max_order, max_jump: tc.max_jump, newton: NewtonOptions::default() };
        let build = |v: f64| -> hypscat::Result<NdEvaluator> {
            let surface = self.cfg.surface.with_param(&tc.param, v).map_err(to_lib)?;
            Ok(NdEvaluator::new(self.interior(&surface).map_err(to_lib)?))
        };
        let trajectories = track(&tc.values, &points(&tc.seeds), build, &opts).stage("track")?;
        out.csv("trajectories.csv", &trajectories_to_csv(&trajectories));
        out.svg("trajectories.svg", &svg_plot(&[], &trajectories));
        let list: Vec<Value> = trajectories
            .iter()
            .map(|t| json!({"params": t.params, "predictor_order": t.predictor_order, "truncated": t.truncated, "records": records_json(&t.records)}))
            .collect();
        out.json("trajectories.json", json!({ "param": tc.param, "trajectories": list }))
    }

    fn eigs(&self, out: &mut Artifacts) -> Result<(), CliError> {
        let ec = self.cfg.eigs.as_ref().ok_or_else(|| CliError::Config("missing 'eigs' section".into()))?;
        match ec.mode {
            EigsMode::Embedded => {
                let grid = ec.t.ok_or_else(|| CliError::Config("embedded scan needs 'eigs.t'".into()))?.points()?;
                let nd = self.interior(&self.cfg.surface)?;
                let scan = embedded_scan(&nd, &grid, ec.threshold, ec.prefilter).stage("embedded-scan")?;
                let mut csv = String::from("t,sigma,multiplicity\n");
                for c in &scan.candidates {
                    let _ = writeln!(csv, "{:.5e},{:.5e},{}", c.t, c.sigma, c.multiplicity);
                }
                out.csv("eigs.csv", &csv);
                out.json("eigs.json", json!({ "threshold": ec.threshold, "candidates": scan.candidates, "samples": scan.samples }))
            }
            EigsMode::OddDirichlet => {
                let m = self.cfg.mesh()?;
                let vals = odd_dirichlet_eigenvalues(m.h, m.n_boundary, ec.wall, m.refinements, ec.count).stage("odd-dirichlet")?;
                let t: Vec<f64> = vals.iter().map(|&l| (l - 0.25).max(0.0).sqrt()).collect();
                let mut csv = String::from("lambda,t\n");
                for (l, t) in vals.iter().zip(&t) {
                    let _ = writeln!(csv, "{l:.5e},{t:.5e}");
                }
                out.csv("eigs.csv", &csv);
                out.json("eigs.json", json!({ "wall": ec.wall, "eigenvalues": vals, "t": t }))
            }
        }
    }

    /// Returns whether the comparison stayed within the limit.
    pub fn oracle(&self, out: &mut Artifacts) -> Result<bool, CliError> {
        let oc = self.cfg.oracle.as_ref().ok_or_else(|| CliError::Config("missing 'oracle' section".into()))?;
        let computed: Vec<(C64, Mat<C64>)> = match &oc.computed {
            Some(path) => read_scatter(path)?,
            None => {
                let grid = oc.t.ok_or_else(|| CliError::Config("oracle needs 'computed' or 't'".into()))?.points()?;
                let nd = self.interior(&self.cfg.surface)?;
                let pts: Vec<C64> = grid.into_iter().map(|t| C64::new(0.5, t)).collect();
                let opts = ScatteringOptions { q_weight: true, require_gap: false };
                let cs = par_map(&pts, self.workers, |&s| scattering_matrix(&nd, s, &opts).map(|r| r.c).stage("scatter"))?;
                pts.into_iter().zip(cs).collect()
            }
        };
        let reference: Vec<Mat<C64>> = match (&oc.case, &oc.reference) {
            (Some(case), None) => computed
                .iter()
                .map(|(s, _)| closed_form_c((*case).into(), *s).stage("closed-form"))
                .collect::<Result<_, _>>()?,
            (None, Some(path)) => {
                let refs = read_scatter(path)?;
                computed
                    .iter()
                    .map(|(s, _)| {
                        refs.iter()
                            .find(|(r, _)| (r - s).norm() <= 1e-12 * (1.0 + s.norm()))
                            .map(|(_, c)| c.clone())
                            .ok_or_else(|| CliError::Mismatch(format!("reference has no point s = {s}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(CliError::Config("oracle needs exactly one of 'case' and 'reference'".into())),
        };
        let mut rows = Vec::new();
        let mut csv = String::from("re_s,im_s,relative_error\n");
        let mut worst = 0.0f64;
        for ((s, c), r) in computed.iter().zip(&reference) {
            if c.nrows() != r.nrows() || c.ncols() != r.ncols() {
                return Err(CliError::Mismatch(format!("{}×{} computed against {}×{} reference", c.nrows(), c.ncols(), r.nrows(), r.ncols())));
            }
            let err = (c - r).norm_l2() / r.norm_l2();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
            rows.push(json!({"s": pair(*s), "relative_error": err}));
            let _ = writeln!(csv, "{:.5e},{:.5e},{err:.5e}", s.re, s.im);
        }
        let pass = worst <= oc.limit;
        out.csv("oracle.csv", &csv);
        out.json("oracle.json", json!({"limit": oc.limit, "max_relative_error": worst, "pass": pass, "points": rows}))?;
        Ok(pass)
    }
}

fn to_lib(e: CliError) -> hypscat::Error {
    match e {
        CliError::Stage { source, .. } => source,
        other => hypscat::Error::InvalidParameter(other.to_string()),
    }
}

fn pair(z: C64) -> Value {
    json!([z.re, z.im])
}

fn mat_json(m: &Mat<C64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| pair(m[(i, j)])).collect())).collect())
}

fn records_json(records: &[ResonanceRecord]) -> Vec<Value> {
    records
        .iter()
        .map(|r| json!({"s": pair(r.s), "residual": r.residual, "multiplicity": r.multiplicity, "class": r.class.label(), "param": r.param}))
        .collect()
}

/// (s, C) pairs of a scatter output.
pub fn read_scatter(path: &Path) -> Result<Vec<(C64, Mat<C64>)>, CliError> {
    let bad = || CliError::Config(format!("{} is not a scatter output", path.display()));
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?).map_err(|_| bad())?;
    let num = |x: &Value| x.as_f64().ok_or_else(bad);
    let cpx = |x: &Value| Ok::<_, CliError>(C64::new(num(&x[0])?, num(&x[1])?));
    let mut out = Vec::new();
    for p in v["points"].as_array().ok_or_else(bad)? {
        let rows = p["c"].as_array().ok_or_else(bad)?;
        let n = rows.len();
        let ncols = rows.first().and_then(|r| r.as_array()).map_or(0, |r| r.len());
        let mut c = Mat::<C64>::zeros(n, ncols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_array().filter(|r| r.len() == ncols).ok_or_else(bad)?;
            for (j, x) in row.iter().enumerate() {
                c[(i, j)] = cpx(x)?;
            }
        }
        out.push((cpx(&p["s"])?, c));
    }
    Ok(out)
}

/// Order-preserving map over `items` on up to `workers` scoped threads.
pub fn par_map<T: Sync, R: Send, E: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R, E> + Sync) -> Result<Vec<R>, E> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let parts: Vec<Result<Vec<R>, E>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>, E>>())).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_and_errors() {
        let xs: Vec<i32> = (0..37).collect();
        let serial = par_map(&xs, 1, |x| Ok::<_, ()>(x * x)).unwrap();
        let parallel = par_map(&xs, 4, |x| Ok::<_, ()>(x * x)).unwrap();
        assert_eq!(serial, parallel);
        assert!(par_map(&xs, 3, |&x| if x == 20 { Err(x) } else { Ok(x) }).is_err());
    }

    #[test]
    fn cache_keys_depend_on_every_part() {
        assert_ne!(Cache::key(&["a", "bc"]), Cache::key(&["ab", "c"]));
        assert_eq!(Cache::key(&["x"]).len(), 64);
    }
}
