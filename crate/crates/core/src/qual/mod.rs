//! Qualification conditions: V-representations, PWLQ, and the condition battery.

pub mod battery;
pub mod pwlq;
pub mod simplex;
pub mod vrep;

pub use battery::{qualification_battery, BatteryMode, Condition, ConditionReport, Mode};
pub use pwlq::{is_pwlq, PwlqDecl, PwlqFn, PwlqReport};
pub use vrep::VRepSet;
