import { strict as assert } from "node:assert";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { gridToCanvas } from "../src/coords.js";
import { UpdateRecord } from "../src/events.js";
import {
	endpointsMatchReport,
	ReportDoc,
	trajectoryAtEvent,
	trajectoryEndpoints,
	TrajectoryDoc,
	trajectoryPolylines,
} from "../src/overlay.js";
import { sparklinePoints, toSvgPath } from "../src/sparkline.js";

const FIXTURES = join(
	dirname(fileURLToPath(import.meta.url)), "..", "..", "..", "tests", "fixtures",
);

function fixture<T>(name: string): T {
	return JSON.parse(readFileSync(join(FIXTURES, name), "utf8")) as T;
}

test("trajectory endpoints match the report within 1 px", () => {
	const doc = fixture<TrajectoryDoc>("trajectory.json");
	const report = fixture<ReportDoc>("report.json");
	assert.ok(endpointsMatchReport(doc, report, 1.0));
	const ends = trajectoryEndpoints(doc);
	report.relocated_points.forEach(([rx, ry], i) => {
		const d = Math.hypot(ends[i].x - rx, ends[i].y - ry);
		assert.ok(d <= 1.0, `pair ${i} off by ${d}`);
	});
});

test("a shifted endpoint no longer matches", () => {
	const doc = fixture<TrajectoryDoc>("trajectory.json");
	const report = fixture<ReportDoc>("report.json");
	const broken: TrajectoryDoc = {
		...doc,
		points: doc.points.map((track) => {
			const moved = track.map((p) => [...p]);
			moved[moved.length - 1][0] += 3;
			return moved;
		}),
	};
	assert.equal(endpointsMatchReport(broken, report, 1.0), false);
});

test("polylines are the gridToCanvas image of every accepted point", () => {
	const doc = fixture<TrajectoryDoc>("trajectory.json");
	const vt = { zoom: 8, offsetX: 0, offsetY: 0 };
	const lines = trajectoryPolylines(doc, vt);
	assert.equal(lines.length, doc.points.length);
	doc.points.forEach((track, i) => {
		assert.equal(lines[i].length, track.length);
		track.forEach(([x, y], j) => {
			assert.deepEqual(lines[i][j], gridToCanvas({ x, y }, vt));
		});
	});
});

test("trajectory starts at the handle and has accepted_steps+1 points", () => {
	const doc = fixture<TrajectoryDoc>("trajectory.json");
	doc.points.forEach((track, i) => {
		assert.equal(track.length, doc.accepted_steps[i] + 1);
	});
});

test("scrubbing truncates tracks consistently with the event log", () => {
	const doc = fixture<TrajectoryDoc>("trajectory.json");
	const raw = readFileSync(join(FIXTURES, "diagnostics.jsonl"), "utf8");
	const updates = raw
		.split("\n")
		.filter((l) => l.trim())
		.map((l) => JSON.parse(l) as UpdateRecord);

	// full log reproduces the artifact exactly
	assert.deepEqual(trajectoryAtEvent(doc, updates, updates.length), doc.points);
	// index 0 shows only the handles
	const start = trajectoryAtEvent(doc, updates, 0);
	start.forEach((track, i) => {
		assert.equal(track.length, 1);
		assert.deepEqual(track[0], doc.points[i][0]);
	});
	// prefix lengths match accepted counts at every scrub position
	for (let upto = 0; upto <= updates.length; upto++) {
		const cut = trajectoryAtEvent(doc, updates, upto);
		const accepted = updates
			.slice(0, upto)
			.filter((r) => r.decision === "accept").length;
		const totalPts = cut.reduce((s, t) => s + t.length, 0);
		assert.equal(totalPts, cut.length + accepted);
	}
});

test("sparkline geometry spans the box and preserves order", () => {
	const pts = sparklinePoints([3, 1, 2], 100, 50, 0);
	assert.equal(pts.length, 3);
	assert.equal(pts[0].x, 0);
	assert.equal(pts[2].x, 100);
	assert.equal(pts[0].y, 0); // max value at the top
	assert.equal(pts[1].y, 50); // min value at the bottom
	const path = toSvgPath(pts);
	assert.match(path, /^M0\.00,0\.00 L50\.00,50\.00 L100\.00,25\.00$/);
});

test("sparkline handles empty and constant series", () => {
	assert.deepEqual(sparklinePoints([], 100, 50), []);
	const flat = sparklinePoints([2, 2, 2], 100, 50, 0);
	assert.ok(flat.every((p) => p.y === flat[0].y));
	assert.equal(toSvgPath([]), "");
});
