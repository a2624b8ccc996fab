//! The four-block scenario: two home achievements, a recognition contract
//! with a university abroad, a degree contract, then an exam abroad.

use studchain_core::{AchievementRecord, Digest, Payload, StudentId};

use crate::world::{achievement, student, World};

pub const RECOGNITION: &str =
    "RECOGNITION BETWEEN home-u AND abroad-u WHERE ISSUER = abroad-u AND TOPIC CONTAINS math AND PASSED MAP FACTOR 1.0";
pub const DEGREE: &str =
    "DEGREE \"BSc Mathematics\" BY home-u REQUIRES ALL(COURSE \"MA-101\", COURSE \"CS-102\", CREDITS >= 15 IN math)";

pub struct StudyAbroad {
    pub world: World,
    pub student: StudentId,
    pub first: Digest,
    pub second: Digest,
    pub recognition: Digest,
    pub degree: Digest,
}

impl StudyAbroad {
    /// Everything up to and including the degree contract.
    pub fn build() -> Self {
        let mut world = World::with_orgs(&["home-u", "abroad-u"]);
        let student = student(0x2024);
        let home = world.org("home-u");
        let first = world
            .submit_settled("home-u", Payload::Achievement(achievement(student, home, "MA-101", "6.0", &["math"], true)))
            .unwrap();
        let second = world
            .submit_settled("home-u", Payload::Achievement(achievement(student, home, "CS-102", "5.0", &["cs"], true)))
            .unwrap();
        let recognition = world.contract("home-u", RECOGNITION).unwrap();
        let degree = world.contract("home-u", DEGREE).unwrap();
        StudyAbroad {
            world,
            student,
            first,
            second,
            recognition,
            degree,
        }
    }

    pub fn foreign_exam(&self) -> AchievementRecord {
        let mut a = achievement(self.student, self.world.org("abroad-u"), "AB-201", "10.0", &["math", "stats"], true);
        a.title = "Linear Algebra".into();
        a
    }
}
