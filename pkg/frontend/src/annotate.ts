// Alternating click protocol: odd clicks set handles, even clicks set
// targets. Undo removes the most recent point, whether it completed a
// pair or not.

import { GridPoint, ViewTransform, canvasToGrid } from "./coords.js";

export interface Pair {
	handle: GridPoint;
	target: GridPoint;
}

export interface ClickResult {
	accepted: boolean;
	hint?: string;
}

export class PointAnnotator {
	private complete: Pair[] = [];
	private pendingHandle: GridPoint | null = null;

	click(
		cx: number,
		cy: number,
		vt: ViewTransform,
		gridWidth: number,
		gridHeight: number,
	): ClickResult {
		const g = canvasToGrid(cx, cy, vt, gridWidth, gridHeight);
		if (g === null) {
			return { accepted: false, hint: "outside image" };
		}
		if (this.pendingHandle === null) {
			this.pendingHandle = g;
		} else {
			this.complete.push({ handle: this.pendingHandle, target: g });
			this.pendingHandle = null;
		}
		return { accepted: true };
	}

	undo(): boolean {
		if (this.pendingHandle !== null) {
			this.pendingHandle = null;
			return true;
		}
		const last = this.complete.pop();
		if (last === undefined) return false;
		this.pendingHandle = last.handle;
		return true;
	}

	clear(): void {
		this.complete = [];
		this.pendingHandle = null;
	}

	get pairs(): readonly Pair[] {
		return this.complete;
	}

	get pending(): GridPoint | null {
		return this.pendingHandle;
	}

	// Body for POST /sessions/{id}/mask and the instruction pairs.
	toPayload(): { pairs: { handle: [number, number]; target: [number, number] }[] } {
		return {
			pairs: this.complete.map((p) => ({
				handle: [p.handle.x, p.handle.y] as [number, number],
				target: [p.target.x, p.target.y] as [number, number],
			})),
		};
	}
}
