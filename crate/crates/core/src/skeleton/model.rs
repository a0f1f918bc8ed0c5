use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::muscle::{CurveParams, MuscleParams, ViaPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    /// Distance from the joint to the distal end along local `x`, m.
    pub length: f64,
    pub mass: f64,
    /// Rotational inertia about the center of mass, kg·m².
    pub inertia: f64,
    /// Center-of-mass distance from the joint along local `x`, m.
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    /// Location of the hinge in the parent frame.
    pub anchor: [f64; 2],
    pub limits: Option<[f64; 2]>,
    /// Viscous damping, N·m·s/rad.
    pub damping: f64,
    /// Child angle relative to the parent when the joint coordinate is zero.
    pub rest_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Root {
    Fixed {
        #[serde(default)]
        origin: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    Floating {
        /// Root link angle when the pitch coordinate is zero.
        #[serde(default)]
        rest_angle: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSphere {
    pub link: usize,
    pub offset: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    pub friction: f64,
    /// Tangential speed at which friction reaches ~76% of its limit, m/s.
    pub smoothing_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 3.0e4, damping: 600.0, friction: 0.9, smoothing_velocity: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerClass {
    Joint,
    Skin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub name: String,
    pub link: usize,
    pub offset: [f64; 2],
    pub weight: f64,
    pub class: MarkerClass,
}

/// Full description of a planar muscle-actuated body.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    /// Gravitational acceleration along `-z`, m/s².
    pub gravity: f64,
    pub root: Root,
    pub links: Vec<Link>,
    /// Sorted so that joint `k` drives link `k + 1`.
    pub joints: Vec<Joint>,
    pub muscles: Vec<MuscleParams>,
    pub contacts: Vec<ContactSphere>,
    pub contact: ContactParams,
    pub key_bodies: Vec<usize>,
    pub markers: Vec<Marker>,
    /// Stiffness of the one-sided joint-limit penalty, N·m/rad.
    pub limit_stiffness: f64,
    pub limit_damping: f64,
}

// ---- file format -----------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    #[serde(default)]
    gravity: f64,
    #[serde(default)]
    key_bodies: Vec<String>,
    #[serde(default = "default_limit_stiffness")]
    limit_stiffness: f64,
    #[serde(default = "default_limit_damping")]
    limit_damping: f64,
    root: Root,
    links: Vec<LinkFile>,
    #[serde(default)]
    joints: Vec<JointFile>,
    #[serde(default)]
    muscles: Vec<MuscleFile>,
    #[serde(default)]
    contacts: Vec<SphereFile>,
    #[serde(default)]
    contact: ContactParams,
    #[serde(default)]
    markers: Vec<MarkerFile>,
}

fn default_limit_stiffness() -> f64 {
    100.0
}

fn default_limit_damping() -> f64 {
    1.0
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    length: f64,
    mass: f64,
    inertia: f64,
    #[serde(default)]
    com: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    name: String,
    parent: String,
    child: String,
    #[serde(default)]
    anchor: Option<[f64; 2]>,
    #[serde(default)]
    limits: Option<[f64; 2]>,
    #[serde(default)]
    damping: f64,
    #[serde(default)]
    rest_angle: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    link: String,
    at: [f64; 2],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MuscleFile {
    name: String,
    f_max: f64,
    l_opt: f64,
    v_max: f64,
    l_slack: f64,
    #[serde(default = "tau_act")]
    tau_act: f64,
    #[serde(default = "tau_deact")]
    tau_deact: f64,
    via: Vec<PointFile>,
    #[serde(default)]
    curves: CurveParams,
}

fn tau_act() -> f64 {
    MuscleParams::TAU_ACT
}

fn tau_deact() -> f64 {
    MuscleParams::TAU_DEACT
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SphereFile {
    link: String,
    at: [f64; 2],
    radius: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MarkerFile {
    name: String,
    link: String,
    at: [f64; 2],
    #[serde(default = "one")]
    weight: f64,
    class: MarkerClass,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => Error::parse(path, other),
        })
    }

    /// Parses and resolves a model file. Structural problems are reported by
    /// [`ModelSpec::validate`], which this calls.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::parse("<model>", e))?;
        let spec = Self::resolve(file)?;
        spec.validate()?;
        Ok(spec)
    }

    fn resolve(file: ModelFile) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, l) in file.links.iter().enumerate() {
            if index.insert(l.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate link name '{}'", l.name)));
            }
        }
        let link = |name: &str, ctx: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("{ctx}: unknown link '{name}'")))
        };
        let links: Vec<Link> = file
            .links
            .iter()
            .map(|l| Link {
                name: l.name.clone(),
                length: l.length,
                mass: l.mass,
                inertia: l.inertia,
                com: l.com.unwrap_or(0.5 * l.length),
            })
            .collect();
        let mut joints = Vec::with_capacity(file.joints.len());
        for j in &file.joints {
            let ctx = format!("joint '{}'", j.name);
            let parent = link(&j.parent, &ctx)?;
            let child = link(&j.child, &ctx)?;
            let anchor = j.anchor.unwrap_or([links[parent].length, 0.0]);
            joints.push(Joint {
                name: j.name.clone(),
                parent,
                child,
                anchor,
                limits: j.limits,
                damping: j.damping,
                rest_angle: j.rest_angle,
            });
        }
        joints.sort_by_key(|j| j.child);
        let mut muscles = Vec::with_capacity(file.muscles.len());
        for m in &file.muscles {
            let ctx = format!("muscle '{}'", m.name);
            let via_points = m
                .via
                .iter()
                .map(|p| Ok(ViaPoint { link: link(&p.link, &ctx)?, offset: p.at }))
                .collect::<Result<Vec<_>>>()?;
            muscles.push(MuscleParams {
                name: m.name.clone(),
                f_max: m.f_max,
                l_opt: m.l_opt,
                v_max: m.v_max,
                l_slack: m.l_slack,
                tau_act: m.tau_act,
                tau_deact: m.tau_deact,
                via_points,
                curves: m.curves,
            });
        }
        let contacts = file
            .contacts
            .iter()
            .map(|s| {
                Ok(ContactSphere { link: link(&s.link, "contact sphere")?, offset: s.at, radius: s.radius })
            })
            .collect::<Result<Vec<_>>>()?;
        let key_bodies =
            file.key_bodies.iter().map(|n| link(n, "key_bodies")).collect::<Result<Vec<_>>>()?;
        let markers = file
            .markers
            .iter()
            .map(|m| {
                Ok(Marker {
                    name: m.name.clone(),
                    link: link(&m.link, &format!("marker '{}'", m.name))?,
                    offset: m.at,
                    weight: m.weight,
                    class: m.class,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelSpec {
            name: file.name,
            gravity: file.gravity,
            root: file.root,
            links,
            joints,
            muscles,
            contacts,
            contact: file.contact,
            key_bodies,
            markers,
            limit_stiffness: file.limit_stiffness,
            limit_damping: file.limit_damping,
        })
    }

    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Lists invariant violations, empty when the model is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.links.len();
        if n == 0 {
            out.push("model has no links".to_string());
            return out;
        }
        for l in &self.links {
            if !(l.mass > 0.0) {
                out.push(format!("link '{}': mass must be positive", l.name));
            }
            if !(l.inertia > 0.0) {
                out.push(format!("link '{}': inertia must be positive", l.name));
            }
            if !(l.length >= 0.0) {
                out.push(format!("link '{}': length must be non-negative", l.name));
            }
        }
        let mut driven = vec![0usize; n];
        for j in &self.joints {
            if j.child >= n || j.parent >= n {
                out.push(format!("joint '{}': link index out of range", j.name));
                continue;
            }
            if j.child == 0 {
                out.push(format!("joint '{}': the root link cannot be a joint child", j.name));
            }
            if j.parent >= j.child {
                out.push(format!(
                    "joint '{}': parent '{}' must be declared before child '{}'",
                    j.name, self.links[j.parent].name, self.links[j.child].name
                ));
            }
            driven[j.child] += 1;
            if let Some([lo, hi]) = j.limits {
                if !(lo < hi) {
                    out.push(format!("joint '{}': limits must satisfy lo < hi", j.name));
                }
            }
            if !(j.damping >= 0.0) {
                out.push(format!("joint '{}': damping must be non-negative", j.name));
            }
        }
        for (i, &count) in driven.iter().enumerate().skip(1) {
            if count != 1 {
                out.push(format!(
                    "link '{}': expected exactly one joint attaching it to the tree, found {count}",
                    self.links[i].name
                ));
            }
        }
        for m in &self.muscles {
            if let Err(Error::Config(msg)) = m.validate() {
                out.push(msg);
            }
            for v in &m.via_points {
                if v.link >= n {
                    out.push(format!("muscle '{}': via point references missing link {}", m.name, v.link));
                }
            }
        }
        for s in &self.contacts {
            if s.link >= n {
                out.push(format!("contact sphere references missing link {}", s.link));
            }
            if !(s.radius > 0.0) {
                out.push("contact sphere radius must be positive".to_string());
            }
        }
        for &k in &self.key_bodies {
            if k >= n {
                out.push(format!("key body references missing link {k}"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.markers {
            if !names.insert(&m.name) {
                out.push(format!("marker '{}': duplicate name", m.name));
            }
            if !(m.weight > 0.0) {
                out.push(format!("marker '{}': weight must be positive", m.name));
            }
            if m.link >= n {
                out.push(format!("marker '{}': missing link", m.name));
            }
        }
        let c = &self.contact;
        if !(c.stiffness >= 0.0 && c.damping >= 0.0 && c.friction >= 0.0 && c.smoothing_velocity > 0.0) {
            out.push("contact parameters must be non-negative (smoothing velocity positive)".into());
        }
        if !(self.gravity >= 0.0) {
            out.push("gravity must be non-negative".into());
        }
        out
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.root, Root::Floating { .. })
    }

    /// Number of generalized coordinates owned by the root.
    pub fn root_dofs(&self) -> usize {
        if self.is_floating() {
            3
        } else {
            0
        }
    }

    pub fn n_q(&self) -> usize {
        self.root_dofs() + self.joints.len()
    }

    pub fn n_muscles(&self) -> usize {
        self.muscles.len()
    }

    pub fn n_key(&self) -> usize {
        self.key_bodies.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn body_weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    /// Generalized-coordinate index of the hinge that drives `link`.
    pub fn coord_of_link(&self, link: usize) -> Option<usize> {
        (link > 0).then(|| self.root_dofs() + link - 1)
    }

    /// Names of the generalized coordinates, root first.
    pub fn coord_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_q());
        if self.is_floating() {
            names.extend(["root_x", "root_z", "root_pitch"].map(String::from));
        }
        names.extend(self.joints.iter().map(|j| j.name.clone()));
        names
    }

    /// Links that carry contact spheres, in ascending order.
    pub fn contact_links(&self) -> Vec<usize> {
        let mut links: Vec<usize> = self.contacts.iter().map(|s| s.link).collect();
        links.sort_unstable();
        links.dedup();
        links
    }

    /// Same model with the root pinned at its current pose; useful for
    /// suspended tests of legged models.
    pub fn with_fixed_root(&self, origin: [f64; 2], angle: f64) -> Self {
        let mut out = self.clone();
        out.root = Root::Fixed { origin, angle };
        out
    }

    pub fn muscle_index(&self, name: &str) -> Option<usize> {
        self.muscles.iter().position(|m| m.name == name)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }
}
