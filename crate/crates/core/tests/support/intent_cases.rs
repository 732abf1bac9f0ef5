//! Utterances with the exact intents the rules backend must produce.

use roadchat_core::intent::*;

pub fn slots(f: impl FnOnce(&mut SlotMap)) -> SlotMap {
    let mut s = SlotMap::default();
    f(&mut s);
    s
}

pub fn golden() -> Vec<(&'static str, Intent)> {
    let mi = |m: f64| m * METERS_PER_MILE;
    vec![
        (
            "Generate a simulation in city Albany with a radius of 3miles, and the volume of traffic should be medium.",
            Intent::with(
                IntentKind::GenerateRealWorld,
                slots(|s| {
                    s.city = Some("Albany".into());
                    s.radius_m = Some(mi(3.0));
                    s.traffic_condition = Some(TrafficCondition::Medium);
                }),
            ),
        ),
        (
            "I want to see a traffic simulation in Albany. There should be medium traffic and it should show me streets in a 1 mile radius.",
            Intent::with(
                IntentKind::GenerateRealWorld,
                slots(|s| {
                    s.city = Some("Albany".into());
                    s.radius_m = Some(mi(1.0));
                    s.traffic_condition = Some(TrafficCondition::Medium);
                }),
            ),
        ),
        (
            "I want to remove Madison Avenue",
            Intent::with(
                IntentKind::EdgeRemove,
                slots(|s| s.edge_name = Some("Madison Avenue".into())),
            ),
        ),
        (
            "I'd like to remove the first lane in Madison Avenue",
            Intent::with(
                IntentKind::LaneRemove,
                slots(|s| {
                    s.edge_name = Some("Madison Avenue".into());
                    s.lane_index = Some(0);
                }),
            ),
        ),
        (
            "I want to set traffic light offsets for the simulation",
            Intent::new(IntentKind::TlsOffset),
        ),
        (
            "I want to set offsets to all the traffic light in the simulation",
            Intent::new(IntentKind::TlsOffset),
        ),
        (
            "I want to set the proportion of electric vehicles as 0.5.",
            Intent::with(IntentKind::VehicleMix, slots(|s| s.ev_proportion = Some(0.5))),
        ),
        ("", Intent::clarify()),
    ]
}

pub fn paraphrases() -> Vec<(&'static str, Intent)> {
    let mi = |m: f64| m * METERS_PER_MILE;
    let real = |city: &str, r: Option<f64>, t: Option<TrafficCondition>| {
        Intent::with(
            IntentKind::GenerateRealWorld,
            slots(|s| {
                s.city = Some(city.into());
                s.radius_m = r;
                s.traffic_condition = t;
            }),
        )
    };
    let remove = |name: &str| {
        Intent::with(IntentKind::EdgeRemove, slots(|s| s.edge_name = Some(name.into())))
    };
    let mix = |p: f64| Intent::with(IntentKind::VehicleMix, slots(|s| s.ev_proportion = Some(p)));
    let grid = |rows, cols, spacing_m, t| {
        Intent::with(
            IntentKind::GenerateAbstract,
            slots(|s| {
                s.network_kind = Some(NetworkKind::Grid);
                s.grid_params = Some(GridParams { rows, cols, spacing_m });
                s.traffic_condition = t;
            }),
        )
    };
    let spider = |arms, circles, spacing_m, t| {
        Intent::with(
            IntentKind::GenerateAbstract,
            slots(|s| {
                s.network_kind = Some(NetworkKind::Spider);
                s.spider_params = Some(SpiderParams { arms, circles, spacing_m });
                s.traffic_condition = t;
            }),
        )
    };
    use TrafficCondition::*;
    vec![
        ("generate a simulation in city albany with a radius of 3 miles and medium traffic", real("albany", Some(mi(3.0)), Some(Medium))),
        ("Simulate traffic in Troy with a 2 km radius and heavy traffic.", real("Troy", Some(2000.0), Some(Heavy))),
        ("Build me a simulation of the city of Boston, light traffic please", real("Boston", None, Some(Light))),
        ("Please run a simulation in New York City with a radius of 0.5 mi", real("New York City", Some(mi(0.5)), None)),
        ("Show me traffic in Albany within half a mile, heavy volume", real("Albany", Some(mi(0.5)), Some(Heavy))),
        ("I want to see a simulation in Schenectady, radius 800 m.", real("Schenectady", Some(800.0), None)),
        ("Please remove Madison Avenue.", remove("Madison Avenue")),
        ("delete State Street from the simulation", remove("State Street")),
        ("Close Lark Street", remove("Lark Street")),
        ("Could you remove the road called Washington Avenue?", remove("Washington Avenue")),
        ("Remove the second lane on Washington Avenue", Intent::with(IntentKind::LaneRemove, slots(|s| {
            s.edge_name = Some("Washington Avenue".into());
            s.lane_index = Some(1);
        }))),
        ("remove lane 0 from Madison Avenue", Intent::with(IntentKind::LaneRemove, slots(|s| {
            s.edge_name = Some("Madison Avenue".into());
            s.lane_index = Some(0);
        }))),
        ("Coordinate the traffic lights with a green wave", Intent::new(IntentKind::TlsOffset)),
        ("Adapt the traffic light cycles to the demand", Intent::new(IntentKind::TlsAdaptation)),
        ("Use Webster's formula on the signals", Intent::new(IntentKind::TlsAdaptation)),
        ("Set the EV share to 30%", mix(0.3)),
        ("Make 75 percent of the vehicles electric", mix(0.75)),
        ("I want the proportion of gasoline vehicles to be 0.25", mix(0.75)),
        ("Change the electric vehicle ratio to 1", mix(1.0)),
        ("Add a vehicle from A0_B0 to E4_D4", Intent::with(IntentKind::AddVehicle, slots(|s| {
            s.origin_edge = Some("A0_B0".into());
            s.dest_edge = Some("E4_D4".into());
        }))),
        ("Insert a car that drives from 12#0 to -34#1.", Intent::with(IntentKind::AddVehicle, slots(|s| {
            s.origin_edge = Some("12#0".into());
            s.dest_edge = Some("-34#1".into());
        }))),
        ("Compare run 1 and run 2", Intent::with(IntentKind::Compare, slots(|s| s.compare_run_ids = Some(vec![1, 2])))),
        ("compare the last two simulations", Intent::new(IntentKind::Compare)),
        ("Generate a 5x5 grid network with 200 m spacing and medium traffic", grid(5, 5, 200.0, Some(Medium))),
        ("make a grid with 4 rows and 6 columns", grid(4, 6, 200.0, None)),
        ("Create a spider network with 20 arms, 10 circles and 150 m spacing", spider(20, 10, 150.0, None)),
        ("spider network with 8 arms and 3 rings, heavy traffic", spider(8, 3, 150.0, Some(Heavy))),
        ("Generate an abstract network", Intent::new(IntentKind::GenerateAbstract)),
        ("hello there", Intent::clarify()),
    ]
}
