//! JSON scene files: a manifold, an optional sweep family with cutoff, and
//! run parameters. Schema violations carry a JSON pointer to the culprit.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::contact::geometric_grid;
use crate::expr::{parse, Expr, ExprError, TIME_VAR};
use crate::manifold::Submanifold;
use crate::osculate::VerifyConfig;
use crate::sweep::SweepFamily;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("expression error at {pointer}: {source}")]
    Expr { pointer: String, source: ExprError },
}

fn schema(pointer: &str, message: impl Into<String>) -> SceneError {
    SceneError::Schema { pointer: pointer.to_string(), message: message.into() }
}

/// Optional overrides of the tolerance defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ToleranceOverrides {
    pub contact: Option<f64>,
    pub vanishing: Option<f64>,
    pub containment: Option<f64>,
    pub flow_residual: Option<f64>,
    pub drift: Option<f64>,
    pub cubic: Option<f64>,
}

/// Numeric parameters from the scene's `params` object; absent entries keep
/// the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Params {
    pub t_grid: Option<Vec<f64>>,
    pub quad_order: Option<usize>,
    pub chart_cells: Option<usize>,
    pub t_cells: Option<usize>,
    pub samples: Option<usize>,
    pub span: Option<f64>,
    pub max_order: Option<usize>,
    pub seed: Option<u64>,
    pub flow_span: Option<f64>,
    pub flow_steps: Option<usize>,
    pub curve_params: Option<usize>,
    pub point: Option<Vec<f64>>,
    pub tolerances: ToleranceOverrides,
}

impl ToleranceOverrides {
    pub fn apply(&self, cfg: &mut VerifyConfig) {
        let t = &mut cfg.tolerances;
        let pairs = [
            (self.contact, &mut t.contact),
            (self.vanishing, &mut t.vanishing),
            (self.containment, &mut t.containment),
            (self.flow_residual, &mut t.flow_residual),
            (self.drift, &mut t.drift),
            (self.cubic, &mut t.cubic),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

impl Params {
    pub fn apply(&self, cfg: &mut VerifyConfig) {
        if let Some(g) = &self.t_grid {
            cfg.t_grid = g.clone();
        }
        if let Some(v) = self.quad_order {
            cfg.quad.order = v;
        }
        if let Some(v) = self.chart_cells {
            cfg.quad.chart_cells = v;
        }
        if let Some(v) = self.t_cells {
            cfg.quad.t_cells = v;
        }
        if let Some(v) = self.samples {
            cfg.samples_per_axis = v;
        }
        if let Some(v) = self.span {
            cfg.span = v;
        }
        if self.max_order.is_some() {
            cfg.max_order = self.max_order;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.flow_span {
            cfg.flow_span = v;
        }
        if let Some(v) = self.flow_steps {
            cfg.flow_steps = v;
        }
        if let Some(v) = self.curve_params {
            cfg.curve_params = v;
        }
        self.tolerances.apply(cfg);
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub manifold: Submanifold,
    pub family: Option<SweepFamily>,
    pub params: Params,
}

impl Scene {
    /// Library defaults overridden by the scene's parameters.
    pub fn config(&self) -> VerifyConfig {
        let mut cfg = VerifyConfig::default();
        self.params.apply(&mut cfg);
        cfg
    }
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SceneError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let name = path.file_stem().map_or_else(|| "scene".to_string(), |s| s.to_string_lossy().into_owned());
    parse_scene(&text, &name)
}

pub fn parse_scene(text: &str, name: &str) -> Result<Scene, SceneError> {
    let root: Value = serde_json::from_str(text).map_err(|e| SceneError::Json(e.to_string()))?;
    let root = object(&root, "")?;
    check_keys(root, "", &["manifold", "family", "cutoff", "params", "name"])?;
    let name = match root.get("name") {
        Some(v) => v.as_str().ok_or_else(|| schema("/name", "expected a string"))?.to_string(),
        None => name.to_string(),
    };
    let manifold = parse_manifold(root.get("manifold").ok_or_else(|| schema("/manifold", "missing key"))?)?;
    let mut family = root.get("family").map(|f| parse_family(f, &manifold)).transpose()?;
    if let Some(c) = root.get("cutoff") {
        let c = object(c, "/cutoff")?;
        check_keys(c, "/cutoff", &["inner", "outer"])?;
        let inner = number(c.get("inner"), "/cutoff/inner")?;
        let outer = number(c.get("outer"), "/cutoff/outer")?;
        let f = family.take().ok_or_else(|| schema("/cutoff", "a cutoff needs a family"))?;
        family = Some(f.with_cutoff(inner, outer).map_err(|e| schema("/cutoff", e.to_string()))?);
    }
    let params = root.get("params").map(parse_params).transpose()?.unwrap_or_default();
    if let Some(p) = &params.point {
        if p.len() != manifold.dim() {
            return Err(schema("/params/point", format!("expected {} chart coordinates", manifold.dim())));
        }
    }
    Ok(Scene { name, manifold, family, params })
}

fn parse_manifold(v: &Value) -> Result<Submanifold, SceneError> {
    let obj = object(v, "/manifold")?;
    check_keys(obj, "/manifold", &["type", "chart_vars", "domain", "ambient_dim", "height", "map"])?;
    let kind = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("/manifold/type", "expected \"graph\" or \"parametric\""))?;
    let vars: Vec<String> = array(obj.get("chart_vars"), "/manifold/chart_vars")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str().map(str::to_string).ok_or_else(|| schema(&format!("/manifold/chart_vars/{i}"), "expected a string"))
        })
        .collect::<Result<_, _>>()?;
    let domain: Vec<(f64, f64)> = array(obj.get("domain"), "/manifold/domain")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let ptr = format!("/manifold/domain/{i}");
            match v.as_array().map(Vec::as_slice) {
                Some([a, b]) => Ok((number(Some(a), &format!("{ptr}/0"))?, number(Some(b), &format!("{ptr}/1"))?)),
                _ => Err(schema(&ptr, "expected [a, b]")),
            }
        })
        .collect::<Result<_, _>>()?;
    if domain.len() != vars.len() {
        return Err(schema("/manifold/domain", format!("expected {} intervals, one per chart variable", vars.len())));
    }
    let n = integer(obj.get("ambient_dim"), "/manifold/ambient_dim")?;
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let manifold = match kind {
        "graph" => {
            let heights = expressions(obj.get("height"), "/manifold/height", &names, false)?;
            if vars.len() + heights.len() != n {
                return Err(schema("/manifold/height", format!("expected {} height functions", n.saturating_sub(vars.len()))));
            }
            Submanifold::graph(vars, domain, heights)
        }
        "parametric" => {
            let map = expressions(obj.get("map"), "/manifold/map", &names, false)?;
            if map.len() != n {
                return Err(schema("/manifold/map", format!("expected {n} components")));
            }
            Submanifold::parametric(vars, domain, map)
        }
        other => return Err(schema("/manifold/type", format!("unknown manifold type \"{other}\""))),
    };
    manifold.map_err(|e| schema("/manifold", e.to_string()))
}

fn parse_family(v: &Value, manifold: &Submanifold) -> Result<SweepFamily, SceneError> {
    let obj = object(v, "/family")?;
    check_keys(obj, "/family", &["k", "fields", "map"])?;
    let n = manifold.ambient_dim();
    let names = manifold.var_names();
    if let Some(map) = obj.get("map") {
        if obj.contains_key("fields") || obj.contains_key("k") {
            return Err(schema("/family", "give either \"map\" or \"k\" with \"fields\""));
        }
        let map = expressions(Some(map), "/family/map", &names, true)?;
        if map.len() != n {
            return Err(schema("/family/map", format!("expected {n} components")));
        }
        return SweepFamily::map(manifold.clone(), map).map_err(|e| schema("/family/map", e.to_string()));
    }
    let k = integer(obj.get("k"), "/family/k")?;
    let fields = array(obj.get("fields"), "/family/fields")?;
    if k == 0 || fields.len() != k {
        return Err(schema("/family/fields", format!("expected k = {k} fields (k ≥ 1)")));
    }
    let fields = fields
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let ptr = format!("/family/fields/{j}");
            let f = expressions(Some(f), &ptr, &names, false)?;
            if f.len() != n {
                return Err(schema(&ptr, format!("expected {n} components, got {}", f.len())));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>, _>>()?;
    SweepFamily::polynomial(manifold.clone(), fields).map_err(|e| schema("/family", e.to_string()))
}

fn parse_params(v: &Value) -> Result<Params, SceneError> {
    let obj = object(v, "/params")?;
    check_keys(
        obj,
        "/params",
        &[
            "t_grid",
            "quad_order",
            "chart_cells",
            "t_cells",
            "samples",
            "span",
            "max_order",
            "seed",
            "flow_span",
            "flow_steps",
            "curve_params",
            "point",
            "tolerances",
        ],
    )?;
    let opt_int = |key: &str| obj.get(key).map(|v| integer(Some(v), &format!("/params/{key}"))).transpose();
    let opt_num = |key: &str| obj.get(key).map(|v| number(Some(v), &format!("/params/{key}"))).transpose();
    let t_grid = obj.get("t_grid").map(parse_grid).transpose()?;
    let point = obj
        .get("point")
        .map(|v| {
            array(Some(v), "/params/point")?
                .iter()
                .enumerate()
                .map(|(i, c)| number(Some(c), &format!("/params/point/{i}")))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let tolerances = match obj.get("tolerances") {
        None => ToleranceOverrides::default(),
        Some(t) => {
            let t = object(t, "/params/tolerances")?;
            let keys = ["contact", "vanishing", "containment", "flow_residual", "drift", "cubic"];
            check_keys(t, "/params/tolerances", &keys)?;
            let get = |k: &str| t.get(k).map(|v| positive(Some(v), &format!("/params/tolerances/{k}"))).transpose();
            ToleranceOverrides {
                contact: get("contact")?,
                vanishing: get("vanishing")?,
                containment: get("containment")?,
                flow_residual: get("flow_residual")?,
                drift: get("drift")?,
                cubic: get("cubic")?,
            }
        }
    };
    Ok(Params {
        t_grid,
        quad_order: opt_int("quad_order")?,
        chart_cells: opt_int("chart_cells")?,
        t_cells: opt_int("t_cells")?,
        samples: opt_int("samples")?,
        span: opt_num("span")?,
        max_order: opt_int("max_order")?,
        seed: opt_int("seed")?.map(|s| s as u64),
        flow_span: opt_num("flow_span")?,
        flow_steps: opt_int("flow_steps")?,
        curve_params: opt_int("curve_params")?,
        point,
        tolerances,
    })
}

/// `{"t0": …, "n": …}` for a geometric grid, or an explicit list.
fn parse_grid(v: &Value) -> Result<Vec<f64>, SceneError> {
    let ptr = "/params/t_grid";
    if let Some(list) = v.as_array() {
        let grid = list
            .iter()
            .enumerate()
            .map(|(i, t)| positive(Some(t), &format!("{ptr}/{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        if grid.is_empty() {
            return Err(schema(ptr, "empty grid"));
        }
        return Ok(grid);
    }
    let obj = object(v, ptr)?;
    check_keys(obj, ptr, &["t0", "n"])?;
    let t0 = positive(obj.get("t0"), &format!("{ptr}/t0"))?;
    let n = integer(obj.get("n"), &format!("{ptr}/n"))?;
    if n == 0 {
        return Err(schema(&format!("{ptr}/n"), "expected at least one point"));
    }
    Ok(geometric_grid(t0, n))
}

fn object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>, SceneError> {
    v.as_object().ok_or_else(|| schema(if ptr.is_empty() { "/" } else { ptr }, "expected an object"))
}

fn array<'a>(v: Option<&'a Value>, ptr: &str) -> Result<&'a Vec<Value>, SceneError> {
    match v {
        None => Err(schema(ptr, "missing key")),
        Some(v) => v.as_array().ok_or_else(|| schema(ptr, "expected an array")),
    }
}

fn number(v: Option<&Value>, ptr: &str) -> Result<f64, SceneError> {
    match v {
        None => Err(schema(ptr, "missing key")),
        Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| schema(ptr, "expected a number")),
    }
}

fn positive(v: Option<&Value>, ptr: &str) -> Result<f64, SceneError> {
    let x = number(v, ptr)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(schema(ptr, "expected a positive number"))
    }
}

fn integer(v: Option<&Value>, ptr: &str) -> Result<usize, SceneError> {
    match v {
        None => Err(schema(ptr, "missing key")),
        Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| schema(ptr, "expected a non-negative integer")),
    }
}

fn check_keys(obj: &Map<String, Value>, ptr: &str, allowed: &[&str]) -> Result<(), SceneError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(&format!("{ptr}/{k}"), "unknown key")),
        None => Ok(()),
    }
}

/// Parses an array of expressions (strings or numbers) over `vars`, plus `t`
/// when `allow_time` is set.
fn expressions(v: Option<&Value>, ptr: &str, vars: &[&str], allow_time: bool) -> Result<Vec<Expr>, SceneError> {
    let mut allowed = vars.to_vec();
    if allow_time {
        allowed.push(TIME_VAR);
    }
    array(v, ptr)?
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let p = format!("{ptr}/{i}");
            let text = match item {
                Value::String(s) => s.clone(),
                Value::Number(x) => x.to_string(),
                _ => return Err(schema(&p, "expected an expression string")),
            };
            let e = parse(&text).map_err(|source| SceneError::Expr { pointer: p.clone(), source })?;
            e.check_vars(&allowed).map_err(|source| SceneError::Expr { pointer: p, source })?;
            Ok(e)
        })
        .collect()
}
