use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sched::Resource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreKind {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Core {
    pub id: usize,
    pub kind: CoreKind,
    /// Throughput relative to a unit-speed core.
    pub speed: f64,
}

/// How cores are exposed to the scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    /// Every core is an independent resource.
    Gts,
    /// Fast and slow cores are paired into virtual cores.
    Vc,
}

/// A schedulable resource as the simulator sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResource {
    pub id: usize,
    pub class: Resource,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    cores: Vec<Core>,
    view: View,
}

impl MachineModel {
    pub fn new(cores: Vec<Core>, view: View) -> Result<Self> {
        if cores.is_empty() {
            return Err(invalid("machine has no cores"));
        }
        if let Some(c) = cores.iter().find(|c| !(c.speed > 0.0 && c.speed.is_finite())) {
            return Err(invalid(format!("core {} has non-positive speed {}", c.id, c.speed)));
        }
        if view == View::Vc {
            let fast = cores.iter().filter(|c| c.kind == CoreKind::Fast).count();
            if fast * 2 != cores.len() {
                return Err(invalid("the VC view needs equally many fast and slow cores"));
            }
        }
        Ok(MachineModel { cores, view })
    }

    /// Exynos 5422: four Cortex-A7 cores (ids 0-3, as the SoC numbers its
    /// CPUs) at the measured GEMM throughput ratio 89.43 / 410.84, then four
    /// Cortex-A15 cores (ids 4-7) at speed 1.
    pub fn exynos5422(view: View) -> Self {
        Self::exynos_subset(4, 4, view).expect("preset is valid")
    }

    /// The preset with only `fast` big and `slow` LITTLE cores enabled.
    pub fn exynos_subset(fast: usize, slow: usize, view: View) -> Result<Self> {
        if fast > 4 || slow > 4 {
            return Err(invalid("the Exynos 5422 has four cores per cluster"));
        }
        let slow_speed = 89.43 / 410.84;
        let cores = (0..slow)
            .map(|id| Core { id, kind: CoreKind::Slow, speed: slow_speed })
            .chain((0..fast).map(|f| Core { id: slow + f, kind: CoreKind::Fast, speed: 1.0 }))
            .collect();
        MachineModel::new(cores, view)
    }

    /// `count` identical unit-speed fast cores.
    pub fn symmetric(count: usize) -> Result<Self> {
        MachineModel::new((0..count).map(|id| Core { id, kind: CoreKind::Fast, speed: 1.0 }).collect(), View::Gts)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn view(&self) -> View {
        self.view
    }

    /// Resources in ascending id order. In the VC view the `i`-th fast core
    /// (by id) pairs with the `i`-th slow core.
    pub fn resources(&self) -> Vec<SimResource> {
        match self.view {
            View::Gts => self
                .cores
                .iter()
                .enumerate()
                .map(|(id, c)| SimResource {
                    id,
                    class: match c.kind {
                        CoreKind::Fast => Resource::FastLane,
                        CoreKind::Slow => Resource::SlowLane,
                    },
                    speed: c.speed,
                })
                .collect(),
            View::Vc => {
                let mut fast: Vec<_> = self.cores.iter().filter(|c| c.kind == CoreKind::Fast).collect();
                let mut slow: Vec<_> = self.cores.iter().filter(|c| c.kind == CoreKind::Slow).collect();
                fast.sort_by_key(|c| c.id);
                slow.sort_by_key(|c| c.id);
                fast.iter()
                    .zip(&slow)
                    .enumerate()
                    .map(|(id, (f, s))| SimResource { id, class: Resource::VcPair, speed: f.speed + s.speed })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_views() {
        assert_eq!(MachineModel::exynos5422(View::Gts).resources().len(), 8);
        let vc = MachineModel::exynos5422(View::Vc).resources();
        assert_eq!(vc.len(), 4);
        assert!(vc.iter().all(|r| r.class == Resource::VcPair));
    }

    #[test]
    fn invalid_machines() {
        assert!(MachineModel::new(vec![], View::Gts).is_err());
        assert!(MachineModel::exynos_subset(4, 0, View::Vc).is_err());
        assert!(MachineModel::new(vec![Core { id: 0, kind: CoreKind::Fast, speed: 0.0 }], View::Gts).is_err());
    }
}
