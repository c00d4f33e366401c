//! Tasks, instances and the instance file format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyFunction;
use crate::error::{Error, Result};

/// One packet: arrival, deadline, size and the energy function it is sent with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// 1-based position in the FCFS sequence.
    pub id: usize,
    pub arrival: f64,
    pub deadline: f64,
    pub bits: u64,
    /// Key into the instance's energy-function table.
    pub energy: String,
    /// Minimum seconds per bit; 0 means unconstrained.
    #[serde(default)]
    pub tau_min: f64,
}

/// The on-disk shape of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct InstanceFile {
    tasks: Vec<Task>,
    energy_functions: BTreeMap<String, EnergyFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon_note: Option<String>,
}

/// An ordered task sequence plus the energy functions its tasks reference.
///
/// Validated on construction and immutable afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    tasks: Vec<Task>,
    energy_functions: BTreeMap<String, EnergyFunction>,
    horizon_note: Option<String>,
    // Resolved energy references: functions in key order, and each task's slot.
    functions: Vec<EnergyFunction>,
    function_of: Vec<usize>,
}

impl Instance {
    pub fn new(
        tasks: Vec<Task>,
        energy_functions: BTreeMap<String, EnergyFunction>,
        horizon_note: Option<String>,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::invalid(None, "instance has no tasks"));
        }
        for (name, f) in &energy_functions {
            f.validate()
                .map_err(|e| Error::invalid(None, format!("energy function {name:?}: {e}")))?;
        }
        let slots: BTreeMap<&str, usize> = energy_functions
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let mut function_of = Vec::with_capacity(tasks.len());
        for (pos, t) in tasks.iter().enumerate() {
            let id = t.id;
            if id != pos + 1 {
                return Err(Error::invalid(
                    Some(id),
                    format!("task ids must run 1..N in order; position {} has id {id}", pos + 1),
                ));
            }
            if !t.arrival.is_finite() || t.arrival < 0.0 {
                return Err(Error::invalid(Some(id), "arrival must be finite and nonnegative"));
            }
            if !t.deadline.is_finite() || t.deadline <= t.arrival {
                return Err(Error::invalid(
                    Some(id),
                    format!("deadline {} must exceed arrival {}", t.deadline, t.arrival),
                ));
            }
            if t.bits == 0 {
                return Err(Error::invalid(Some(id), "bits must be positive"));
            }
            if !t.tau_min.is_finite() || t.tau_min < 0.0 {
                return Err(Error::invalid(Some(id), "tau_min must be finite and nonnegative"));
            }
            if pos > 0 && t.arrival < tasks[pos - 1].arrival {
                return Err(Error::invalid(Some(id), "arrivals must be nondecreasing"));
            }
            let slot = slots
                .get(t.energy.as_str())
                .ok_or_else(|| Error::invalid(Some(id), format!("unknown energy function {:?}", t.energy)))?;
            function_of.push(*slot);
        }
        let functions = energy_functions.values().cloned().collect();
        Ok(Instance {
            tasks,
            energy_functions,
            horizon_note,
            functions,
            function_of,
        })
    }

    /// Build an instance whose tasks all share one energy function named `"f0"`.
    pub fn with_shared_energy(
        arrivals: &[f64],
        deadlines: &[f64],
        bits: &[u64],
        energy: EnergyFunction,
    ) -> Result<Self> {
        if arrivals.len() != deadlines.len() || arrivals.len() != bits.len() {
            return Err(Error::param("arrival, deadline and bit vectors differ in length"));
        }
        let tau_min = energy.tau_min().unwrap_or(0.0);
        let tasks = (0..arrivals.len())
            .map(|i| Task {
                id: i + 1,
                arrival: arrivals[i],
                deadline: deadlines[i],
                bits: bits[i],
                energy: "f0".into(),
                tau_min,
            })
            .collect();
        Instance::new(tasks, BTreeMap::from([("f0".to_string(), energy)]), None)
    }

    /// Build an instance with one energy function per task, named `f1..fN`.
    pub fn with_task_energies(
        arrivals: &[f64],
        deadlines: &[f64],
        bits: &[u64],
        energies: Vec<EnergyFunction>,
    ) -> Result<Self> {
        let n = arrivals.len();
        if deadlines.len() != n || bits.len() != n || energies.len() != n {
            return Err(Error::param("task vectors differ in length"));
        }
        let mut table = BTreeMap::new();
        let mut tasks = Vec::with_capacity(n);
        for (i, f) in energies.into_iter().enumerate() {
            let name = format!("f{}", i + 1);
            tasks.push(Task {
                id: i + 1,
                arrival: arrivals[i],
                deadline: deadlines[i],
                bits: bits[i],
                energy: name.clone(),
                tau_min: f.tau_min().unwrap_or(0.0),
            });
            table.insert(name, f);
        }
        Instance::new(tasks, table, None)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn energy_functions(&self) -> &BTreeMap<String, EnergyFunction> {
        &self.energy_functions
    }

    pub fn horizon_note(&self) -> Option<&str> {
        self.horizon_note.as_deref()
    }

    /// Energy functions in key order; [`function_index`](Self::function_index)
    /// indexes into this slice.
    pub fn functions(&self) -> &[EnergyFunction] {
        &self.functions
    }

    /// Slot of task `pos` (0-based) in [`functions`](Self::functions).
    pub fn function_index(&self, pos: usize) -> usize {
        self.function_of[pos]
    }

    pub fn energy_of(&self, pos: usize) -> &EnergyFunction {
        &self.functions[self.function_of[pos]]
    }

    pub fn arrivals(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.arrival).collect()
    }

    pub fn deadlines(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.deadline).collect()
    }

    pub fn bits(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.bits as f64).collect()
    }

    pub fn tau_mins(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.tau_min).collect()
    }

    /// Total cost `Σ vᵢωᵢ(τᵢ)` of a control vector.
    pub fn cost(&self, controls: &[f64]) -> f64 {
        controls
            .iter()
            .enumerate()
            .map(|(i, &tau)| self.tasks[i].bits as f64 * self.energy_of(i).eval(tau))
            .sum()
    }

    /// A copy with every task's `tau_min` replaced.
    pub fn with_tau_mins(&self, tau_mins: &[f64]) -> Result<Self> {
        let mut tasks = self.tasks.clone();
        for (t, &m) in tasks.iter_mut().zip(tau_mins) {
            t.tau_min = m;
        }
        Instance::new(tasks, self.energy_functions.clone(), self.horizon_note.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Instance::try_from(file)
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        Instance::new(f.tasks, f.energy_functions, f.horizon_note)
    }
}

impl From<Instance> for InstanceFile {
    fn from(i: Instance) -> Self {
        InstanceFile {
            tasks: i.tasks,
            energy_functions: i.energy_functions,
            horizon_note: i.horizon_note,
        }
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    Instance::from_json(&text)
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, inst.to_json())?;
    Ok(())
}
