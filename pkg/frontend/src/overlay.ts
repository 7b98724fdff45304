// Trajectory overlay geometry. All coordinates come from service
// artifacts; nothing is recomputed client-side.

import { GridPoint, ViewTransform, gridToCanvas } from "./coords.js";
import { UpdateRecord } from "./events.js";

export interface TrajectoryDoc {
	converged: boolean;
	total_updates: number;
	accepted_steps: number[];
	points: number[][][]; // per pair: accepted positions, starting at the handle
	final_points: number[][];
}

export interface ReportDoc {
	mean_distance: number;
	converged: boolean;
	updates_used: number;
	per_pair_distance: number[];
	relocated_points: number[][];
	outside_mask_l1: number;
}

export function trajectoryEndpoints(doc: TrajectoryDoc): GridPoint[] {
	return doc.points.map((track) => {
		const last = track[track.length - 1];
		return { x: last[0], y: last[1] };
	});
}

// Canvas-space polyline for each pair's accepted positions.
export function trajectoryPolylines(
	doc: TrajectoryDoc,
	vt: ViewTransform,
): { x: number; y: number }[][] {
	return doc.points.map((track) =>
		track.map(([x, y]) => gridToCanvas({ x, y }, vt)),
	);
}

// Offline scrubbing: truncate each pair's track to the accepted steps
// recorded in the first `uptoIndex` event-log entries. The full log
// reproduces the artifact exactly; index 0 shows only the handles.
export function trajectoryAtEvent(
	doc: TrajectoryDoc,
	updates: UpdateRecord[],
	uptoIndex: number,
): number[][][] {
	const acceptedSoFar = doc.points.map(() => 0);
	for (const rec of updates.slice(0, uptoIndex)) {
		if (rec.decision === "accept") acceptedSoFar[rec.point] += 1;
	}
	return doc.points.map((track, i) =>
		track.slice(0, Math.min(track.length, acceptedSoFar[i] + 1)),
	);
}

// Overlay endpoints must sit within `tol` px of the report's re-localized
// points; a mismatch means a stale overlay or a broken artifact pair.
export function endpointsMatchReport(
	doc: TrajectoryDoc,
	report: ReportDoc,
	tol = 1.0,
): boolean {
	const ends = trajectoryEndpoints(doc);
	if (ends.length !== report.relocated_points.length) return false;
	return ends.every((e, i) => {
		const [rx, ry] = report.relocated_points[i];
		return Math.hypot(e.x - rx, e.y - ry) <= tol;
	});
}
