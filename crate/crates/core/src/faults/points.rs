//! Expansion of fault models into injection points over a dry-run trace.

use std::collections::HashSet;

use super::{encoding_of, AddrRange, ConcreteFault, FaultModelSpec, FaultTarget, InjectionPoint};
use super::{Effect, InstrClass, Lifetime, Location};
use crate::campaign::{DryRunTrace, TraceEntry};
use crate::emu::{decode, RegId};

fn excluded(model: &FaultModelSpec, global: &[AddrRange], trace: &DryRunTrace, e: &TraceEntry) -> bool {
    if global
        .iter()
        .chain(&model.filters.exclude_ranges)
        .any(|r| r.contains(e.addr))
    {
        return true;
    }
    if model.filters.exclude_classes.is_empty() {
        return false;
    }
    let class = decode(e.halfwords(), trace.arch)
        .map(|i| InstrClass::of(&i))
        .unwrap_or(InstrClass::Invalid);
    model.filters.exclude_classes.contains(&class)
}

fn subs(effect: Effect, bytes: u32) -> Vec<Option<u8>> {
    match effect.positions(bytes) {
        None => vec![None],
        Some(n) => (0..n as u8).map(Some).collect(),
    }
}

/// All concrete faults of `model` over `trace`, in injection-point order.
///
/// Instruction models yield points per executed instruction, register
/// models per use (read or write) of an allow-listed register. Permanent
/// models are deduplicated by address or register and are injected at the
/// start of the trace.
pub fn enumerate_faults(
    model: &FaultModelSpec,
    trace: &DryRunTrace,
    excluded_ranges: &[AddrRange],
) -> Vec<ConcreteFault> {
    let permanent = model.lifetime == Lifetime::Permanent;
    let mut out = Vec::new();
    let fault = |time, location, sub_index, width: Option<u8>, original, faulted| ConcreteFault {
        point: InjectionPoint {
            time,
            location,
            sub_index,
            model: model.id.clone(),
        },
        lifetime: model.lifetime,
        effect: model.effect,
        width,
        original,
        faulted,
    };

    match model.target {
        FaultTarget::Instruction => {
            let mut seen = HashSet::new();
            for e in &trace.entries {
                if excluded(model, excluded_ranges, trace, e) {
                    continue;
                }
                if permanent && !seen.insert(e.addr) {
                    continue;
                }
                let time = if permanent { trace.start_time } else { e.time };
                let bytes = e.bytes();
                let original = encoding_of(&bytes);
                for sub in subs(model.effect, bytes.len() as u32) {
                    let faulted = (model.effect != Effect::Skip).then(|| {
                        let mut b = bytes.clone();
                        model.effect.apply_bytes(&mut b, sub);
                        encoding_of(&b)
                    });
                    out.push(fault(
                        time,
                        Location::Instruction { addr: e.addr },
                        sub,
                        Some(bytes.len() as u8),
                        Some(original),
                        faulted,
                    ));
                }
            }
        }
        FaultTarget::Register => {
            let mask = model.register_mask();
            let mut seen = 0u32;
            for e in &trace.entries {
                if excluded(model, excluded_ranges, trace, e) {
                    continue;
                }
                let mut uses = e.uses() & mask;
                if permanent {
                    uses &= !seen;
                    seen |= uses;
                }
                let time = if permanent { trace.start_time } else { e.time };
                while uses != 0 {
                    let r = uses.trailing_zeros() as u8;
                    uses &= uses - 1;
                    for sub in subs(model.effect, 4) {
                        out.push(fault(
                            time,
                            Location::Register { reg: RegId(r) },
                            sub,
                            None,
                            None,
                            None,
                        ));
                    }
                }
            }
        }
    }
    if permanent {
        out.sort_by(|a, b| a.point.cmp(&b.point));
    }
    out
}

/// The injection points of [`enumerate_faults`].
pub fn enumerate_injection_points(
    model: &FaultModelSpec,
    trace: &DryRunTrace,
    excluded_ranges: &[AddrRange],
) -> Vec<InjectionPoint> {
    enumerate_faults(model, trace, excluded_ranges)
        .into_iter()
        .map(|f| f.point)
        .collect()
}
