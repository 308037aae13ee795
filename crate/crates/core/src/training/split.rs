use std::collections::BTreeSet;

use crate::data::{FoldAssignment, PreparedEye, Split};
use crate::error::{Error, Result};

/// Eyes of one fold rotation, grouped by role.
#[derive(Clone, Debug)]
pub struct SplitEyes<'a> {
    pub rotation: usize,
    pub split: Split,
    pub train: Vec<&'a PreparedEye>,
    pub validation: Vec<&'a PreparedEye>,
    pub test: Vec<&'a PreparedEye>,
}

/// Routes every eye to the role of its patient's fold and checks that no
/// patient ends up in two roles.
pub fn assemble_split<'a>(eyes: &'a [PreparedEye], folds: &FoldAssignment, rotation: usize) -> Result<SplitEyes<'a>> {
    let split = folds.split(rotation)?;
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for eye in eyes {
        let p = eye.patient_id;
        if split.train.contains(&p) {
            train.push(eye);
        } else if split.validation.contains(&p) {
            validation.push(eye);
        } else if split.test.contains(&p) {
            test.push(eye);
        } else {
            return Err(Error::Data(format!("patient {p} is not assigned to any fold")));
        }
    }
    check_leakage(&train, &validation, &test)?;
    Ok(SplitEyes {
        rotation,
        split,
        train,
        validation,
        test,
    })
}

/// Fails if any patient contributes eyes to more than one of the groups.
pub fn check_leakage(train: &[&PreparedEye], validation: &[&PreparedEye], test: &[&PreparedEye]) -> Result<()> {
    let ids = |eyes: &[&PreparedEye]| eyes.iter().map(|e| e.patient_id).collect::<BTreeSet<u32>>();
    let groups = [("train", ids(train)), ("validation", ids(validation)), ("test", ids(test))];
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            if let Some(p) = groups[i].1.intersection(&groups[j].1).next() {
                return Err(Error::Leakage(format!(
                    "patient {p} is in both the {} and the {} set",
                    groups[i].0, groups[j].0
                )));
            }
        }
    }
    Ok(())
}
