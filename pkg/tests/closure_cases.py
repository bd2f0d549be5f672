"""Shared closure-annotation cases used by unit and acceptance tests."""
from roadcast.augment.closure import ClosureType

ROAD, LANE, NONE = ClosureType.ROAD, ClosureType.LANE, ClosureType.NONE

REFERENCE_CASES = [
    ("Closed due to roadwork", ROAD),
    ("Closed for bridge demolition work", ROAD),
    ("Right lane blocked.", LANE),
    ("Two lanes blocked", LANE),
    ("Roadway reduced to 1 lane", LANE),
    ("Lane blocked. One lane closed", LANE),
    ("Lane closed due to construction work", LANE),
    ("Shoulder closed on entry ramp due to construction work", LANE),
    ("Intermittent lane closures due to utility work", LANE),
    ("Three lanes closed due to construction work", LANE),
    ("Right lane closed due to construction work", LANE),
    ("One lane closed due to maintenance work", LANE),
]

CRAFTED = [
    # road closures
    ("CLOSED DUE TO ROADWORK", ROAD),
    ("closed, roadwork", ROAD),
    ("Closed between Main St and 5th Ave due to roadwork", ROAD),
    ("Closed until further notice for bridge repairs", ROAD),
    ("Closed bridge", ROAD),
    ("Road closed", ROAD),
    ("Road closed due to resurfacing", ROAD),
    ("Northbound road closed at Exit 12", ROAD),
    ("Ramp closed for roadwork near the stadium", ROAD),
    ("Closes nightly, roadwork on overpass", ROAD),
    # lane closures
    ("Left lane blocked due to construction", LANE),
    ("Both lanes blocked near milepost 4", LANE),
    ("Center lane closed", LANE),
    ("Lanes closed for paving", LANE),
    ("Hard shoulder closed", LANE),
    ("Hard shoulder blocked by equipment", LANE),
    ("Road reduced to one lane", LANE),
    ("Traffic reduced to a single lane", LANE),
    ("Lane closure on I-70 westbound", LANE),
    ("Overnight lane closures expected", LANE),
    ("Left shoulder closed", LANE),
    ("Inside shoulder closed for sign work", LANE),
    ("lane   blocked!!!", LANE),
    ("Ramp lanes blocked temporarily", LANE),
    ("Speed reduced. Right lane closed ahead", LANE),
    # near misses and unrelated text
    ("Paving equipment staged nearby", NONE),
    ("", NONE),
    ("Roadwork", NONE),
    ("Construction on the bridge", NONE),
    ("Roadway open, no delays", NONE),
    ("Lane markings being repainted", NONE),
    ("Shoulder work", NONE),
    ("Shoulder closure", NONE),
    ("Disclosed roadwork schedule", NONE),
    ("Enclosed work zone", NONE),
    ("Lanes open after repairs", NONE),
    ("Reduced speed limit in work zone", NONE),
    ("Blocked drain being cleared", NONE),
    ("Planeclosed event", NONE),
    ("Bridge inspection, expect delays", NONE),
    ("Utility work on sidewalk", NONE),
    ("Roadside mowing", NONE),
    ("Traffic signal maintenance", NONE),
    ("Reduced visibility due to dust", NONE),
    ("Soft shoulders", NONE),
    ("Lanes shifted", NONE),
    ("Close to downtown, resurfacing", NONE),
    # "close*" is a prefix of "closed" but not of "closing" or "closures"
    ("Closing overnight for roadwork", NONE),
    ("Road closures in effect until Friday", NONE),
    ("Two right lanes closing at 9pm", NONE),
]
