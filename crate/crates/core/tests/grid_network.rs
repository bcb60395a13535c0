use gridpulse_core::grid_model::{
    build_ybus, kron_reduce, solve_power_flow, GridModel, PowerFlowOptions, Stage, StageEdit, C64,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn loaded_ybus(m: &GridModel) -> DMatrix<C64> {
    let op = solve_power_flow(m, 1.0, &PowerFlowOptions::default()).unwrap();
    let mut edits: Vec<StageEdit> = (0..m.bus_count())
        .map(|i| StageEdit::AddShunt { node: i, admittance: op.load_admittance(i) })
        .collect();
    for g in &m.generators {
        edits.push(StageEdit::AddShunt {
            node: g.bus,
            admittance: C64::new(0.0, g.xd_prime).inv(),
        });
    }
    build_ybus(m, &edits).unwrap()
}

#[test]
fn ybus_elements_match_branch_list() {
    let m = GridModel::ieee39();
    let y = build_ybus(&m, &[]).unwrap();
    assert_eq!(y.shape(), (39, 39));
    // Recompute each element straight from the branch list.
    let mut off = vec![vec![C64::new(0.0, 0.0); 39]; 39];
    let mut charging = vec![0.0; 39];
    for br in &m.branches {
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        off[br.from][br.to] -= ys;
        off[br.to][br.from] -= ys;
        charging[br.from] += br.b / 2.0;
        charging[br.to] += br.b / 2.0;
    }
    for i in 0..39 {
        for j in 0..39 {
            let scale = y[(i, j)].norm().max(1.0);
            if i != j {
                assert!((y[(i, j)] - off[i][j]).norm() / scale < 1e-12);
                assert!((y[(i, j)] - y[(j, i)]).norm() / scale < 1e-12);
            }
        }
        let row_off: C64 = (0..39).filter(|&j| j != i).map(|j| y[(i, j)]).sum();
        let shunt = C64::new(m.buses[i].g_shunt, m.buses[i].b_shunt + charging[i]);
        let want = -row_off + shunt;
        assert!((y[(i, i)] - want).norm() / y[(i, i)].norm() < 1e-12);
    }
}

#[test]
fn reduction_matches_impedance_route() {
    // Reduced admittance = inverse of the full impedance matrix restricted
    // to the kept nodes.
    let m = GridModel::ieee39();
    let y = loaded_ybus(&m);
    let keep: Vec<usize> = m.generators.iter().map(|g| g.bus).collect();
    let red = kron_reduce(&y, &keep, Stage::Prefault).unwrap();
    assert_eq!(red.dim(), 10);
    let z = y.clone().try_inverse().unwrap();
    let z_kk = DMatrix::from_fn(10, 10, |r, c| z[(keep[r], keep[c])]);
    let oracle = z_kk.try_inverse().unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let d = (red.matrix[(i, j)] - oracle[(i, j)]).norm();
            assert!(d / oracle[(i, j)].norm().max(1.0) < 1e-9, "({i},{j}) off by {d}");
            assert!((red.matrix[(i, j)] - red.matrix[(j, i)]).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduced_system_preserves_terminal_voltages(
        inj in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 10)
    ) {
        let m = GridModel::ieee39();
        let y = loaded_ybus(&m);
        let keep: Vec<usize> = m.generators.iter().map(|g| g.bus).collect();
        let red = kron_reduce(&y, &keep, Stage::Prefault).unwrap();

        let i_k = DVector::from_iterator(10, inj.iter().map(|&(a, b)| C64::new(a, b)));
        let mut i_full = DVector::<C64>::zeros(39);
        for (r, &node) in keep.iter().enumerate() {
            i_full[node] = i_k[r];
        }
        let v_full = y.clone().lu().solve(&i_full).unwrap();
        let v_k = red.matrix.clone().lu().solve(&i_k).unwrap();
        let v_e = &red.recovery * &v_k;
        let scale = v_full.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (r, &node) in keep.iter().enumerate() {
            prop_assert!((v_full[node] - v_k[r]).norm() / scale < 1e-9);
        }
        for (r, &node) in red.eliminated.iter().enumerate() {
            prop_assert!((v_full[node] - v_e[r]).norm() / scale < 1e-9);
        }
    }
}
