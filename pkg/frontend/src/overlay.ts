// Box overlay geometry: unit-square boxes from the service scaled onto
// the displayed image element.

import type { BoxModel } from './types.js'

export interface OverlayRect {
  left: number
  top: number
  width: number
  height: number
}

export function overlayRect(box: BoxModel, displayWidth: number, displayHeight: number): OverlayRect {
  const left = box.x1 * displayWidth
  const top = box.y1 * displayHeight
  return {
    left,
    top,
    width: box.x2 * displayWidth - left,
    height: box.y2 * displayHeight - top,
  }
}

export function overlayRects(
  boxes: BoxModel[],
  displayWidth: number,
  displayHeight: number,
): OverlayRect[] {
  return boxes.map((box) => overlayRect(box, displayWidth, displayHeight))
}
