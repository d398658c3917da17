// Client-side copy of the box-text grammar: {<x1><y1><x2><y2>} with
// integers in 0..100, x1 <= x2 and y1 <= y2. Must stay in lockstep with
// the server-side parser; the shared fixture file in the repository's
// tests/fixtures keeps the two honest.

export interface QuantizedBox {
  x1: number
  y1: number
  x2: number
  y2: number
}

export interface ParsedBoxes {
  boxes: QuantizedBox[]
  malformed: number
}

const GROUP_RE = /\{<(\d+)><(\d+)><(\d+)><(\d+)>\}|<(\d+)><(\d+)><(\d+)><(\d+)>/g
const BRACED_RE = /\{<(\d+)><(\d+)><(\d+)><(\d+)>\}/g

function coordsOf(match: RegExpExecArray): [number, number, number, number] {
  const groups = match.slice(1).filter((g): g is string => g !== undefined)
  const [a, b, c, d] = groups
  return [Number(a), Number(b), Number(c), Number(d)]
}

function isValid([x1, y1, x2, y2]: [number, number, number, number]): boolean {
  return x1 >= 0 && y1 >= 0 && x2 <= 100 && y2 <= 100 && x1 <= x2 && y1 <= y2
}

export function parseBoxes(text: string, strict = false): ParsedBoxes {
  const pattern = new RegExp(strict ? BRACED_RE.source : GROUP_RE.source, 'g')
  const boxes: QuantizedBox[] = []
  let malformed = 0
  let match: RegExpExecArray | null
  while ((match = pattern.exec(text)) !== null) {
    const coords = coordsOf(match)
    if (isValid(coords)) {
      const [x1, y1, x2, y2] = coords
      boxes.push({ x1, y1, x2, y2 })
    } else {
      malformed += 1
    }
  }
  return { boxes, malformed }
}

export function serializeBox(box: QuantizedBox): string {
  return `{<${box.x1}><${box.y1}><${box.x2}><${box.y2}>}`
}

/** Human-readable problems for one box group, used by the edit form. */
export function groupErrors([x1, y1, x2, y2]: [number, number, number, number]): string[] {
  const errors: string[] = []
  if (x2 < x1) errors.push('x2 < x1')
  if (y2 < y1) errors.push('y2 < y1')
  for (const [name, value] of [['x1', x1], ['y1', y1], ['x2', x2], ['y2', y2]] as const) {
    if (value < 0 || value > 100) errors.push(`${name} outside 0..100`)
  }
  return errors
}

/**
 * Validate the answer text of a box-bearing turn before submitting an
 * edit: every braced group must be well-formed and at least one box must
 * survive. Returns an empty list when the text is acceptable.
 */
export function validateBoxAnswer(text: string): string[] {
  const pattern = new RegExp(BRACED_RE.source, 'g')
  const errors: string[] = []
  let valid = 0
  let match: RegExpExecArray | null
  while ((match = pattern.exec(text)) !== null) {
    const coords = coordsOf(match)
    const problems = groupErrors(coords)
    if (problems.length > 0) {
      errors.push(`${match[0]}: ${problems.join(', ')}`)
    } else {
      valid += 1
    }
  }
  if (valid === 0) {
    errors.push('answer contains no valid box group')
  }
  return errors
}
