//! Small fixed markets used by tests, examples and the verification suite.

use crate::demand::UtilityParams;
use crate::pricing::{Instance, ResourceModel, UserType};

/// One user, one resource: `α = 0.5`, `c = 1`, `γ = 1`, `R = 1`, `C = 4`.
///
/// The optimal price under any revenue weight is `0.5`, where the user
/// demands exactly the capacity.
pub fn single_type_instance() -> Instance {
    let utility = UtilityParams::new(0.5, 1.0).expect("valid utility");
    let user = UserType::new("user", 1, vec![1.0], utility).expect("valid user");
    let res = ResourceModel::new(vec!["cpu".into()], vec![4.0]).expect("valid resources");
    Instance::new(res, vec![user], 1.0).expect("valid instance")
}

/// Job centroids clustered from a production trace with CPU and memory
/// capacity 6 each.
///
/// | type | cpu  | mem  | α   | users |
/// |------|------|------|-----|-------|
/// | 1    | 0.4  | 2.7  | 0.4 | 1     |
/// | 2    | 0.01 | 0.02 | 0.7 | 8     |
/// | 3    | 0.6  | 0.5  | 0.5 | 1     |
///
/// All types have `c = 1` and the discount is `γ = 1`.
pub fn clustered_instance() -> Instance {
    let types = [
        ("type1", [0.4, 2.7], 0.4, 1),
        ("type2", [0.01, 0.02], 0.7, 8),
        ("type3", [0.6, 0.5], 0.5, 1),
    ];
    let users = types
        .iter()
        .map(|(label, req, alpha, count)| {
            let utility = UtilityParams::new(*alpha, 1.0).expect("valid utility");
            UserType::new(*label, *count, req.to_vec(), utility).expect("valid user")
        })
        .collect();
    let res = ResourceModel::new(vec!["cpu".into(), "mem".into()], vec![6.0, 6.0]).expect("valid resources");
    Instance::new(res, users, 1.0).expect("valid instance")
}
