//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use xformplay::io::{self, EventLogFile, LogHeader, LogRecord};
use xformplay::pose::{decompose_trs, kabsch_align, rotation_angle_between, PointCorrespondences};
use xformplay::puzzle::{generate_puzzle, Actor, GameState, Level, MoveAction, ParamField, Status, DIFFICULTY_RANGE};
use xformplay::scene::{build_annotations, cell_region, Annotation, BrickModel, CellRegion};
use xformplay::xform::{compose, Angle, multiply_expansion, rotation_matrix, Mat4, RotationAxis, TransformStep, Vec3};

use common::{random_axis, random_step, random_steps, rng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rotation_algebra() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut ortho, mut det, mut inverse) = (0f64, 0f64, 0f64);
    for axis in RotationAxis::ALL {
        for _ in 0..1000 {
            let theta = r.random_range(-720.0..720.0);
            let m = rotation_matrix(axis, Angle::degrees(theta)).unwrap();
            let l = m.linear();
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| l[k][i] * l[k][j]).sum();
                    ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
            det = det.max((m.det() - 1.0).abs());
            let back = m * rotation_matrix(axis, Angle::degrees(-theta)).unwrap();
            inverse = inverse.max(back.max_abs_diff(&Mat4::IDENTITY));
        }
    }
    let elapsed = start.elapsed();
    check(
        ortho <= 1e-12 && det <= 1e-12 && inverse <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("3000 rotations: |RᵀR−I| {ortho:.1e}, |det−1| {det:.1e}, |R(θ)R(−θ)−I| {inverse:.1e}, {elapsed:.2?}"),
    )
}

/// Every non-trivial entry sits in the region its step kind owns; all
/// other entries are exactly the identity's.
fn layout_ok(step: &TransformStep) -> bool {
    let m = step.matrix().unwrap();
    (0..4).all(|r| {
        (0..4).all(|c| {
            let v = m.at(r, c);
            let id = if r == c { 1.0 } else { 0.0 };
            match (cell_region(r, c), step) {
                (CellRegion::BottomRow, _) => v == id,
                (CellRegion::TranslationRegion, TransformStep::Translate { v: t }) => v == t.to_array()[r],
                (CellRegion::TranslationRegion, _) => v == 0.0,
                (CellRegion::RotationScaleRegion, TransformStep::Translate { .. }) => v == id,
                (CellRegion::RotationScaleRegion, TransformStep::Scale { factor }) => {
                    v == if r == c { *factor } else { 0.0 }
                }
                (CellRegion::RotationScaleRegion, TransformStep::Rotate { axis, angle }) => {
                    let a = axis.index();
                    if r == a || c == a {
                        v == id
                    } else {
                        let (s, co) = angle.sin_cos();
                        // rows/cols of the plane, in cyclic order after the axis
                        let (p, q) = ((a + 1) % 3, (a + 2) % 3);
                        let expected = match (r == p, c == p) {
                            (true, true) => co,
                            (false, false) => co,
                            (true, false) => -s,
                            (false, true) => s,
                        };
                        debug_assert!(r == p || r == q);
                        v == expected
                    }
                }
            }
        })
    })
}

fn matrix_layout() -> Outcome {
    let mut r = rng(2);
    let mut steps: Vec<TransformStep> = Vec::new();
    for _ in 0..500 {
        let t = [r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)];
        steps.push(TransformStep::translate(t[0], t[1], t[2]));
        steps.push(TransformStep::scale(r.random_range(0.01..100.0)));
        for axis in RotationAxis::ALL {
            steps.push(TransformStep::rotate(axis, r.random_range(-360.0..360.0)));
        }
    }
    for axis in RotationAxis::ALL {
        for k in -8..=8 {
            steps.push(TransformStep::rotate(axis, 45.0 * f64::from(k)));
        }
    }
    steps.push(TransformStep::translate(0.0, 0.0, 0.0));
    steps.push(TransformStep::scale(1.0));
    let bad = steps.iter().filter(|s| !layout_ok(s)).count();
    check(bad == 0, format!("{} matrices over translate/rotate(x,y,z)/scale, {bad} misplaced", steps.len()))
}

fn decomposition_round_trip() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0f64;
    let mut failures = 0;
    for _ in 0..1000 {
        let m = compose(&random_steps(&mut r, 6)).unwrap();
        match decompose_trs(&m) {
            Ok(d) => worst = worst.max(d.recompose().max_abs_diff(&m)),
            Err(_) => failures += 1,
        }
    }
    check(failures == 0 && worst <= 1e-9, format!("1000 compositions, max entry error {worst:.1e}, {failures} failed"))
}

fn random_rotation(r: &mut impl Rng) -> Mat4 {
    let steps: Vec<TransformStep> =
        (0..3).map(|_| TransformStep::rotate(random_axis(r), r.random_range(-180.0..180.0))).collect();
    compose(&steps).unwrap()
}

fn unit_cube() -> Vec<Vec3> {
    let mut v = Vec::new();
    for x in [0.0, 1.0] {
        for y in [0.0, 1.0] {
            for z in [0.0, 1.0] {
                v.push(Vec3::new(x, y, z));
            }
        }
    }
    v
}

fn procrustes() -> Outcome {
    let mut r = rng(4);
    let (mut clean_angle, mut clean_t) = (0f64, 0f64);
    for _ in 0..200 {
        let truth = Mat4::from_linear_translation(
            random_rotation(&mut r).linear(),
            Vec3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)),
        );
        let n = r.random_range(3..12);
        let pre: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)))
            .collect();
        let pairs = pre.iter().map(|p| (*p, truth.apply_point(*p).unwrap())).collect();
        let fit = kabsch_align(&PointCorrespondences::new(pairs).unwrap()).unwrap();
        clean_angle = clean_angle.max(rotation_angle_between(&fit.rotation, &truth).unwrap().deg());
        clean_t = clean_t.max(fit.translation.distance(truth.translation()));
    }
    let noise = Normal::new(0.0, 0.01).unwrap();
    let (mut noisy_sum, mut noisy_worst) = (0f64, 0f64);
    for _ in 0..100 {
        let truth = Mat4::from_linear_translation(random_rotation(&mut r).linear(), Vec3::new(1.0, -2.0, 0.5));
        let pairs = unit_cube()
            .into_iter()
            .map(|p| {
                let q = truth.apply_point(p).unwrap();
                (p, Vec3::new(q.x + noise.sample(&mut r), q.y + noise.sample(&mut r), q.z + noise.sample(&mut r)))
            })
            .collect();
        let fit = kabsch_align(&PointCorrespondences::new(pairs).unwrap()).unwrap();
        let e = rotation_angle_between(&fit.rotation, &truth).unwrap().deg();
        noisy_sum += e;
        noisy_worst = noisy_worst.max(e);
    }
    let noisy_mean = noisy_sum / 100.0;
    let reference = reference_disagreement();
    check(
        clean_angle < 1e-6 && clean_t < 1e-9 && noisy_mean < 1.0 && reference < 1e-9,
        format!(
            "noiseless: {clean_angle:.1e}° / {clean_t:.1e} units; σ=0.01 unit cube: mean {noisy_mean:.3}°, \
             worst {noisy_worst:.3}° over 100 trials; reference solver agreement {reference:.1e}"
        ),
    )
}

/// Largest entry difference from the reference fits stored in the fixture.
fn reference_disagreement() -> f64 {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/alignment_fixture.json");
    let fixture: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let vec3 = |v: &serde_json::Value| Vec3::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap(), v[2].as_f64().unwrap());
    let mut worst = 0f64;
    for case in fixture["cases"].as_array().unwrap() {
        let pre = case["pre"].as_array().unwrap().iter().map(vec3);
        let img = case["img"].as_array().unwrap().iter().map(vec3);
        let fit = kabsch_align(&PointCorrespondences::new(pre.zip(img).collect()).unwrap()).unwrap();
        let expected: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| case["rotation"][i][j].as_f64().unwrap()));
        worst = worst.max(common::max_abs(&fit.rotation.linear(), &expected));
        worst = worst.max(fit.translation.distance(vec3(&case["translation"])));
    }
    worst
}

fn annotation_label(s: &GameState, pick: fn(&Annotation) -> Option<f64>) -> Option<f64> {
    build_annotations(s, &BrickModel::demo(), None).annotations.iter().find_map(pick)
}

fn correspondence_properties() -> Outcome {
    let mut r = rng(5);
    let dim = |a: &Annotation| match a {
        Annotation::DimensionLine { label, .. } => Some(*label),
        _ => None,
    };
    let arc = |a: &Annotation| match a {
        Annotation::RotationArc { sweep, .. } => Some(sweep.deg()),
        _ => None,
    };
    let (mut doubling, mut negation, mut expansion) = (0, 0, 0);
    for i in 0..500 {
        let t = [r.random_range(-20.0..20.0), r.random_range(-20.0..20.0), r.random_range(-20.0..20.0)];
        let mut a = common::session(i);
        let mut b = common::session(i);
        a.apply_physical(TransformStep::translate(t[0], t[1], t[2])).unwrap();
        b.apply_physical(TransformStep::translate(2.0 * t[0], 2.0 * t[1], 2.0 * t[2])).unwrap();
        if annotation_label(&b, dim) != annotation_label(&a, dim).map(|l| 2.0 * l) {
            doubling += 1;
        }

        let axis = random_axis(&mut r);
        let theta = r.random_range(1.0..179.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut a = common::session(i);
        let mut b = common::session(i);
        a.apply_physical(TransformStep::rotate(axis, theta)).unwrap();
        b.apply_physical(TransformStep::rotate(axis, -theta)).unwrap();
        match (annotation_label(&a, arc), annotation_label(&b, arc)) {
            (Some(x), Some(y)) if x == -y => {}
            _ => negation += 1,
        }

        let (left, right) = (compose(&random_steps(&mut r, 3)).unwrap(), compose(&random_steps(&mut r, 3)).unwrap());
        let e = multiply_expansion(&left, &right);
        let product = left * right;
        if !e.cells.iter().all(|c| c.sum == product.at(c.row, c.col)) {
            expansion += 1;
        }
    }
    check(
        doubling + negation + expansion == 0,
        format!("500 cases each: label doubling {doubling} bad, arc negation {negation} bad, expansion sums {expansion} bad"),
    )
}

fn solve_by_hints(spec: xformplay::puzzle::PuzzleSpec) -> Option<usize> {
    let mut s = GameState::new_session(spec).ok()?;
    s.apply_physical_target().ok()?;
    for n in 1..=3 {
        let h = s.hint().ok()?;
        s.apply_virtual(h.suggested_step).ok()?;
        if s.status() == Status::Solved {
            return Some(n);
        }
    }
    None
}

fn puzzle_solvability() -> Outcome {
    let mut unsolved = 0;
    let mut longest = 0;
    for d in DIFFICULTY_RANGE {
        for seed in 0..1000u64 {
            match solve_by_hints(generate_puzzle(seed, Level::Function, d).unwrap()) {
                Some(n) => longest = longest.max(n),
                None => unsolved += 1,
            }
        }
    }
    check(unsolved == 0, format!("5000 puzzles, {unsolved} not solved within 3 hints, longest {longest}"))
}

fn random_action(r: &mut impl Rng, s: &GameState) -> (Actor, MoveAction) {
    match r.random_range(0..10) {
        0..=2 => (Actor::Physical, MoveAction::ApplyStep { step: random_step(r) }),
        3..=5 => (Actor::Virtual, MoveAction::ApplyStep { step: random_step(r) }),
        6 => {
            let field = [ParamField::X, ParamField::Angle, ParamField::Factor][r.random_range(0..3)];
            (Actor::Virtual, MoveAction::EditLastStepParam { field, value: r.random_range(0.5..3.0) })
        }
        7 => (Actor::Virtual, MoveAction::Undo),
        8 => (Actor::Virtual, MoveAction::Reset),
        _ => match s.hint() {
            Ok(h) => (Actor::Virtual, MoveAction::ApplyStep { step: h.suggested_step }),
            Err(_) => (Actor::Virtual, MoveAction::Undo),
        },
    }
}

fn replay_determinism(dir: &Path) -> Outcome {
    let mut r = rng(6);
    let model = BrickModel::demo();
    let mut mismatched = 0;
    let mut events = 0;
    for i in 0..100u64 {
        let level = [Level::Motion, Level::Mapping, Level::Function][i as usize % 3];
        let spec = generate_puzzle(i, level, 1 + (i % 5) as u8).unwrap();
        let mut live = GameState::new_session(spec.clone()).unwrap();
        let mut records = Vec::new();
        for t in 0..r.random_range(5..40u64) {
            let (actor, action) = random_action(&mut r, &live);
            if live.apply(actor, action, t * 17).is_ok() {
                records.push(LogRecord { event: *live.event_log().last().unwrap(), status_after: live.status() });
            }
        }
        events += records.len();
        let path = dir.join(format!("walk-{i}.{}", io::LOG_EXT));
        let puzzle = io::PuzzleFile::new(spec.clone(), model.clone());
        let log = EventLogFile { header: LogHeader::for_spec(&spec), records, truncated_tail: false };
        let ok = io::write_log(&path, &log)
            .and_then(|_| io::read_log(&path))
            .and_then(|back| io::replay_log(&puzzle, &back))
            .map(|o| io::snapshot(&o.state, &model, None).to_json() == io::snapshot(&live, &model, None).to_json())
            .unwrap_or(false);
        if !ok {
            mismatched += 1;
        }
    }
    check(mismatched == 0, format!("100 sessions ({events} events), {mismatched} snapshots differ"))
}

fn cli_pipeline(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_xformplay");
    let start = Instant::now();
    let mut failed = Vec::new();
    for seed in 0..50u64 {
        let level = if seed % 2 == 0 { "function" } else { "mapping" };
        let difficulty = (1 + seed % 5).to_string();
        let puzzle = dir.join(format!("cli-{seed}.{}", io::PUZZLE_EXT));
        let log = dir.join(format!("cli-{seed}.{}", io::LOG_EXT));
        let run = |args: &[&std::ffi::OsStr]| Command::new(bin).args(args).output().map(|o| o.status.success());
        let ok = run(&[
            "gen".as_ref(),
            "--seed".as_ref(),
            seed.to_string().as_ref(),
            "--level".as_ref(),
            level.as_ref(),
            "--difficulty".as_ref(),
            difficulty.as_ref(),
            "-o".as_ref(),
            puzzle.as_os_str(),
        ])
        .unwrap_or(false)
            && run(&["solve".as_ref(), puzzle.as_os_str(), "--log".as_ref(), log.as_os_str()]).unwrap_or(false)
            && run(&["replay".as_ref(), "--log".as_ref(), log.as_os_str(), "--puzzle".as_ref(), puzzle.as_os_str(), "--verify".as_ref()])
                .unwrap_or(false);
        if !ok {
            failed.push(seed);
        }
    }
    let elapsed = start.elapsed();
    check(
        failed.is_empty() && elapsed < Duration::from_secs(10),
        format!("50 seeds gen → solve → replay --verify, failures {failed:?}, {elapsed:.2?}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("matrix algebra", Box::new(rotation_algebra)),
        ("matrix layout", Box::new(matrix_layout)),
        ("decomposition round trip", Box::new(decomposition_round_trip)),
        ("procrustes", Box::new(procrustes)),
        ("correspondence properties", Box::new(correspondence_properties)),
        ("puzzle solvability", Box::new(puzzle_solvability)),
        ("replay determinism", Box::new(|| replay_determinism(dir.path()))),
        ("cli end-to-end", Box::new(|| cli_pipeline(dir.path()))),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let o = f();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
