//! Versioned JSON scene documents.
//!
//! A component is stored as its field kind, a display name, the flat
//! parameter vector (the same layout fitting optimises) and the non-parameter
//! options a kind needs. Emitting a parsed canonical document reproduces it
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compose::CompositeScene;
use crate::error::{Error, Result};
use crate::fields::{
    Checker, ConstantField, Dome, Field, FieldKind, GaussianBlobField, GroundPlaneField,
    PiecewiseConstantRayField, SoftBoxField, SoftSphereField, DEFAULT_SIGMA_MAX,
};
use crate::geometry::{rig_views, Camera, Vec3};
use crate::imageio::write_atomic;
use crate::transport::QuadratureConfig;

pub const SCENE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayOption {
    pub origin: Vec3,
    pub direction: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<Checker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dome: Option<Dome>,
    /// Required for `piecewise_ray`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray: Option<RayOption>,
}

impl ComponentOptions {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub kind: FieldKind,
    #[serde(default)]
    pub name: String,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "ComponentOptions::is_empty")]
    pub options: ComponentOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub version: u32,
    pub t_far: f64,
    pub components: Vec<ComponentDoc>,
    pub camera: Camera,
    /// Explicit view list; when absent the rig around `camera` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<Vec<Camera>>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl ComponentDoc {
    pub fn from_field(field: &Field, name: impl Into<String>) -> Self {
        let mut options = ComponentOptions::default();
        match field {
            Field::GaussianBlob(f) => options.sigma_max = Some(f.sigma_max),
            Field::SoftSphere(f) => options.sigma_max = Some(f.sigma_max),
            Field::SoftBox(f) => options.sigma_max = Some(f.sigma_max),
            Field::Constant(f) => options.sigma_max = Some(f.sigma_max),
            Field::GroundPlane(f) => {
                options.sigma_max = Some(f.sigma_max);
                options.checker = f.checker;
                options.dome = f.dome;
            }
            Field::PiecewiseRay(f) => {
                options.ray = Some(RayOption {
                    origin: f.origin,
                    direction: f.direction,
                })
            }
        }
        Self {
            kind: field.kind(),
            name: name.into(),
            params: field.param_vector(),
            options,
        }
    }

    /// Builds the field, rejecting options that do not apply to the kind
    /// and parameters outside the kind's valid domain.
    pub fn to_field(&self) -> Result<Field> {
        let o = &self.options;
        let sigma_max = o.sigma_max.unwrap_or(DEFAULT_SIGMA_MAX);
        if !(sigma_max > 0.0 && sigma_max.is_finite()) {
            return Err(self.invalid(format!("sigma_max must be positive, got {sigma_max}")));
        }
        let is_ground = self.kind == FieldKind::GroundPlane;
        let is_piecewise = self.kind == FieldKind::PiecewiseRay;
        if !is_ground && (o.checker.is_some() || o.dome.is_some()) {
            return Err(self.invalid("checker/dome apply only to ground_plane".into()));
        }
        if !is_piecewise && o.ray.is_some() {
            return Err(self.invalid("ray applies only to piecewise_ray".into()));
        }
        if is_piecewise && o.sigma_max.is_some() {
            return Err(self.invalid("piecewise_ray has no sigma_max".into()));
        }

        let zero = Vec3::zeros();
        let template = match self.kind {
            FieldKind::GaussianBlob => Field::GaussianBlob(GaussianBlobField {
                sigma_max,
                ..GaussianBlobField::new(zero, Vec3::repeat(1.0), 0.0, [0.0; 3])
            }),
            FieldKind::SoftSphere => Field::SoftSphere(SoftSphereField {
                center: zero,
                radius: 1.0,
                softness: 1.0,
                amplitude: 0.0,
                color: [0.0; 3],
                sigma_max,
            }),
            FieldKind::SoftBox => Field::SoftBox(SoftBoxField {
                center: zero,
                half_extents: Vec3::repeat(1.0),
                softness: 1.0,
                amplitude: 0.0,
                color: [0.0; 3],
                sigma_max,
            }),
            FieldKind::GroundPlane => Field::GroundPlane(GroundPlaneField {
                height: 0.0,
                softness: 1.0,
                amplitude: 0.0,
                color: [0.0; 3],
                checker: o.checker,
                dome: o.dome,
                sigma_max,
            }),
            FieldKind::Constant => Field::Constant(ConstantField { sigma_max, ..ConstantField::new(0.0, [0.0; 3]) }),
            FieldKind::PiecewiseRay => {
                let ray = o.ray.as_ref().ok_or_else(|| self.invalid("piecewise_ray needs options.ray".into()))?;
                let n = self.params.len();
                if n == 0 || n % 5 != 0 {
                    return Err(self.invalid(format!("piecewise_ray needs 5 params per interval, got {n}")));
                }
                let m = n / 5;
                let colors = self.params[2 * m..].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                return PiecewiseConstantRayField::new(
                    ray.origin,
                    ray.direction,
                    self.params[..m].to_vec(),
                    self.params[m..2 * m].to_vec(),
                    colors,
                )
                .map(Field::PiecewiseRay);
            }
        };
        let field = template.set_params(&self.params)?;
        let mut projected = field.clone();
        projected.project();
        if projected != field {
            return Err(self.invalid("parameters outside the valid domain".into()));
        }
        Ok(field)
    }

    fn invalid(&self, msg: String) -> Error {
        Error::InvalidConfig(format!("component `{}` ({}): {msg}", self.name, self.kind))
    }
}

impl SceneDocument {
    pub fn new(scene: &CompositeScene, names: &[String], camera: Camera, quadrature: QuadratureConfig) -> Self {
        let components = scene
            .components
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("component_{i}"));
                ComponentDoc::from_field(f, name)
            })
            .collect();
        Self {
            version: SCENE_VERSION,
            t_far: scene.t_far,
            components,
            camera,
            views: None,
            quadrature,
        }
    }

    /// Parses and validates a document. Syntax errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: SceneDocument = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported scene version {} (expected {SCENE_VERSION})",
                self.version
            )));
        }
        self.camera.validate()?;
        for v in self.views.iter().flatten() {
            v.validate()?;
        }
        self.quadrature.validate()?;
        self.to_scene().map(|_| ())
    }

    /// Canonical form: pretty-printed with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn to_scene(&self) -> Result<CompositeScene> {
        let fields = self.components.iter().map(ComponentDoc::to_field).collect::<Result<Vec<_>>>()?;
        CompositeScene::new(fields, self.t_far)
    }

    pub fn names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    pub fn view_cameras(&self) -> Vec<Camera> {
        match &self.views {
            Some(v) => v.clone(),
            None => rig_views(&self.camera).to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> Camera {
        Camera {
            position: Vec3::new(9.0, 0.0, 6.0),
            look_at: Vec3::new(0.0, 0.0, 0.5),
            up: Vec3::z(),
            vertical_fov: 0.7,
            width: 8,
            height: 6,
        }
    }

    fn scene() -> CompositeScene {
        CompositeScene::new(
            vec![
                Field::GaussianBlob(GaussianBlobField::new(
                    Vec3::new(0.5, -1.0, 0.6),
                    Vec3::new(0.5, 0.5, 0.6),
                    6.0,
                    [0.8, 0.1, 0.1],
                )),
                Field::SoftBox(SoftBoxField {
                    center: Vec3::new(-1.0, 1.0, 0.5),
                    half_extents: Vec3::new(0.5, 0.4, 0.5),
                    softness: 0.03,
                    amplitude: 10.0,
                    color: [0.1, 0.3, 0.9],
                    sigma_max: 12.0,
                }),
                Field::GroundPlane(GroundPlaneField {
                    height: 0.0,
                    softness: 0.02,
                    amplitude: 10.0,
                    color: [0.6, 0.6, 0.6],
                    checker: Some(Checker { size: 1.0, color: [0.3, 0.3, 0.3] }),
                    dome: Some(Dome { center: Vec3::zeros(), radius: 25.0 }),
                    sigma_max: DEFAULT_SIGMA_MAX,
                }),
            ],
            40.0,
        )
        .unwrap()
    }

    fn doc() -> SceneDocument {
        let names = vec!["red".to_string(), "blue".to_string()];
        SceneDocument::new(&scene(), &names, camera(), QuadratureConfig::default())
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let d = doc();
        let text = d.to_json().unwrap();
        let back = SceneDocument::parse(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.to_scene().unwrap(), scene());
        assert_eq!(back.names()[2], "component_2");
    }

    #[test]
    fn piecewise_component_round_trips() {
        let pw = PiecewiseConstantRayField::new(
            Vec3::zeros(),
            Vec3::x(),
            vec![0.0, 2.0],
            vec![0.0, 3.0],
            vec![[0.0; 3], [1.0, 0.5, 0.0]],
        )
        .unwrap();
        let c = ComponentDoc::from_field(&Field::PiecewiseRay(pw.clone()), "p");
        assert_eq!(c.to_field().unwrap(), Field::PiecewiseRay(pw));
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = SceneDocument::parse("{\n  \"version\": 1,\n  oops\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = doc().to_json().unwrap().replace("soft_box", "teapot");
        let err = SceneDocument::parse(&text).unwrap_err();
        assert!(matches!(err, Error::Json(_)));
        assert!(err.to_string().contains("teapot"));
    }

    #[test]
    fn semantic_errors_are_rejected() {
        let mut d = doc();
        d.components[0].params.pop();
        assert!(matches!(d.validate(), Err(Error::ParamLength { .. })));

        let mut d = doc();
        d.components[0].params[3] = -1.0;
        assert!(matches!(d.validate(), Err(Error::InvalidConfig(_))));

        let mut d = doc();
        d.components[0].options.dome = Some(Dome { center: Vec3::zeros(), radius: 3.0 });
        assert!(matches!(d.validate(), Err(Error::InvalidConfig(_))));

        let mut d = doc();
        d.version = 7;
        assert!(d.validate().is_err());
    }

    #[test]
    fn default_views_are_the_rig() {
        let mut d = doc();
        assert_eq!(d.view_cameras().len(), 3);
        assert_eq!(d.view_cameras()[0], camera());
        d.views = Some(vec![camera()]);
        assert_eq!(d.view_cameras().len(), 1);
    }
}
